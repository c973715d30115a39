#include "sdgclf/cli.hpp"

int main(int argc, char** argv) { return sdgclf::cli::run(argc, argv); }
