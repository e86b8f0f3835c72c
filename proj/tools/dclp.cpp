// Command-line entry point: dclp <subcommand> [--config PATH] [--seed N]
// [--out DIR] [--profile desk|paper] [key=value ...]

#include <CLI11.hpp>
#include <iostream>

#include "dclp/app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Dual-encoder contrastive emoticon classifier"};
    app.require_subcommand(1);

    std::string config_path, out_dir, profile;
    std::uint64_t seed = 0;
    std::vector<std::string> overrides;

    for (const auto& name : dclp::subcommands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--profile", profile, "built-in defaults")->check(CLI::IsMember({"desk", "paper"}));
        sub->add_option("overrides", overrides, "key=value settings");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dclp::kExitUsage;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    std::vector<std::string> flags;
    if (chosen->count("--profile")) flags.push_back("profile=" + profile);
    for (const auto& o : overrides) flags.push_back(o);
    if (chosen->count("--seed")) flags.push_back("seed=" + std::to_string(seed));
    if (chosen->count("--out")) flags.push_back("out=" + out_dir);

    dclp::RunConfig cfg;
    try {
        cfg = dclp::parse_config(config_path, flags);
    } catch (const dclp::Error& e) {
        std::cerr << e.what() << "\n";
        return dclp::exit_code_for(e.kind());
    }
    return dclp::run(chosen->get_name(), cfg, std::cout, std::cerr);
}
