// Writes a synthetic corpus with planted goal keywords and fixture stores for
// two simulated providers.

#include <CLI11.hpp>

#include <iostream>

#include "sdgclf/pipeline.hpp"

#ifndef SDGCLF_DATA_DIR
#define SDGCLF_DATA_DIR "data"
#endif

int main(int argc, char** argv) {
    sdgclf::SyntheticSpec spec;
    int unlabeled = 0;
    std::string out_dir = "synthetic";
    std::string goals_path = std::string(SDGCLF_DATA_DIR) + "/sdg_goals.json";
    std::string countries_path = std::string(SDGCLF_DATA_DIR) + "/countries.json";

    CLI::App app{"Synthetic corpus and provider fixtures", "sdgclf_synth"};
    app.add_option("--records", spec.records, "labeled + unlabeled records")->capture_default_str();
    app.add_option("--unlabeled", unlabeled, "trailing records written without labels")->capture_default_str();
    app.add_option("--accuracy", spec.decision_accuracy, "probability a provider decision is correct")->capture_default_str();
    app.add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    app.add_option("--goals", goals_path, "goal definitions")->capture_default_str();
    app.add_option("--countries", countries_path, "country lookup")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto goals = sdgclf::load_goal_definitions(goals_path);
        const auto lookup = sdgclf::CountryLookup::load(countries_path);
        const auto bundle = sdgclf::write_synthetic_bundle(spec, unlabeled, out_dir, goals, lookup);
        std::cout << bundle.corpus_csv << '\n';
        for (const auto& p : bundle.fixture_paths) std::cout << p << '\n';
    } catch (const sdgclf::Error& e) {
        std::cerr << "sdgclf_synth: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
