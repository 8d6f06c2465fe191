// Command-line driver for the adversarial-retrieval lab; talks to the
// shared library through the C API only.

#include "area/area_capi.h"

#include "CLI11.hpp"

#include <cstdio>
#include <memory>
#include <string>

namespace {

struct LabCloser {
    void operator()(area_lab* lab) const { area_lab_close(lab); }
};
using LabPtr = std::unique_ptr<area_lab, LabCloser>;

int fail(area_status status) {
    std::fprintf(stderr, "error (%s): %s\n", area_status_name(status), area_last_error());
    return 1;
}

LabPtr open_lab(const std::string& config, const std::string& out, long long seed, bool has_seed,
                area_status& status) {
    area_lab* raw = nullptr;
    status = area_lab_open(config.c_str(), out.c_str(), &raw);
    LabPtr lab(raw);
    if (status != AREA_OK) return lab;
    if (has_seed) status = area_lab_set(lab.get(), "seed", std::to_string(seed).c_str());
    return lab;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-retrieval lab (AREA task, MCARA attack)"};
    app.require_subcommand(1);

    std::string config;
    std::string out = "run";
    long long seed = 0;
    bool has_seed = false;

    app.add_option("--config", config, "path to key=value config file")->required();
    app.add_option("--out", out, "output directory for stage artifacts");
    app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        has_seed = true;
    });

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and queries");
    auto* trainp = app.add_subcommand("train-pipeline", "train the target DR model and reranker");
    auto* trains = app.add_subcommand("train-surrogate",
                                      "imitate the black box and train the surrogate");
    auto* attack = app.add_subcommand("attack", "run attacks over sampled target documents");
    auto* report = app.add_subcommand("report", "compute metrics from the outcome logs");

    std::string method, stratum, rank_check;
    attack->add_option("--method", method, "ts|tfidf|mcara|mcara-single|mcara-ind");
    attack->add_option("--stratum", stratum, "easy|middle|hard|mixture");
    attack->add_option("--rank-check", rank_check, "surrogate|blackbox");

    CLI11_PARSE(app, argc, argv);

    area_status status = AREA_OK;
    LabPtr lab = open_lab(config, out, seed, has_seed, status);
    if (status != AREA_OK) return fail(status);

    if (gen->parsed()) {
        status = area_lab_gen_data(lab.get());
    } else if (trainp->parsed()) {
        status = area_lab_train_pipeline(lab.get());
    } else if (trains->parsed()) {
        status = area_lab_train_surrogate(lab.get());
    } else if (attack->parsed()) {
        status = area_lab_attack(lab.get(), method.empty() ? nullptr : method.c_str(),
                                 stratum.empty() ? nullptr : stratum.c_str(),
                                 rank_check.empty() ? nullptr : rank_check.c_str());
    } else if (report->parsed()) {
        status = area_lab_report(lab.get());
        if (status == AREA_OK) std::fputs(area_lab_report_text(lab.get()), stdout);
    }
    if (status != AREA_OK) return fail(status);
    return 0;
}
