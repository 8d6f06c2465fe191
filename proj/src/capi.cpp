#include "area/area_capi.h"

#include "area/evaluation.hpp"

#include <memory>
#include <new>
#include <stdexcept>
#include <string>

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

area_status classify(const std::exception& e) {
    set_error(e.what());
    if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr ||
        dynamic_cast<const std::out_of_range*>(&e) != nullptr)
        return AREA_ERR_INVALID_ARGUMENT;
    std::string what = e.what();
    if (what.find("diverged") != std::string::npos) return AREA_ERR_DIVERGED;
    if (what.find("missing") != std::string::npos || what.find("run ") != std::string::npos)
        return AREA_ERR_STATE;
    if (what.find("cannot open") != std::string::npos || what.find("write") != std::string::npos)
        return AREA_ERR_IO;
    return AREA_ERR_INTERNAL;
}

} // namespace

struct area_lab {
    std::unique_ptr<area::Experiment> experiment;
    std::string report_text;

    area_lab(area::ExperimentConfig config, std::string out_dir)
        : experiment(std::make_unique<area::Experiment>(std::move(config), std::move(out_dir))) {}
};

extern "C" {

const char* area_version(void) { return "0.1.0"; }

const char* area_status_name(area_status status) {
    switch (status) {
        case AREA_OK: return "ok";
        case AREA_ERR_INVALID_ARGUMENT: return "invalid argument";
        case AREA_ERR_IO: return "io error";
        case AREA_ERR_STATE: return "missing stage artifacts";
        case AREA_ERR_DIVERGED: return "training diverged";
        case AREA_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

const char* area_last_error(void) { return g_last_error.c_str(); }

area_status area_lab_open(const char* config_path, const char* out_dir, area_lab** out) {
    if (!config_path || !out_dir || !out) {
        set_error("null argument");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    try {
        *out = new area_lab(area::parse_config_file(config_path), out_dir);
        return AREA_OK;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return AREA_ERR_INTERNAL;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_open_text(const char* config_text, const char* out_dir, area_lab** out) {
    if (!config_text || !out_dir || !out) {
        set_error("null argument");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    try {
        *out = new area_lab(area::parse_config_text(config_text), out_dir);
        return AREA_OK;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return AREA_ERR_INTERNAL;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

void area_lab_close(area_lab* lab) { delete lab; }

area_status area_lab_set(area_lab* lab, const char* key, const char* value) {
    if (!lab || !key || !value) {
        set_error("null argument");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        // Re-validate the whole config so overrides cannot leave the lab in
        // an inconsistent state.
        area::ExperimentConfig updated = lab->experiment->config();
        updated.set(key, value);
        updated.validate();
        lab->experiment =
            std::make_unique<area::Experiment>(std::move(updated), lab->experiment->out_dir());
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_gen_data(area_lab* lab) {
    if (!lab) {
        set_error("null lab");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        lab->experiment->gen_data();
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_train_pipeline(area_lab* lab) {
    if (!lab) {
        set_error("null lab");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        lab->experiment->train_pipeline();
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_train_surrogate(area_lab* lab) {
    if (!lab) {
        set_error("null lab");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        lab->experiment->train_surrogate();
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_attack(area_lab* lab, const char* method, const char* stratum,
                            const char* rank_check) {
    if (!lab) {
        set_error("null lab");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        if (rank_check) {
            area_status st = area_lab_set(lab, "rank_check", rank_check);
            if (st != AREA_OK) return st;
        }
        std::vector<std::string> methods =
            method ? std::vector<std::string>{method} : lab->experiment->config().methods;
        std::vector<std::string> strata =
            stratum ? std::vector<std::string>{stratum} : lab->experiment->config().strata;
        for (const auto& m : methods) {
            for (const auto& s : strata) lab->experiment->attack(m, area::stratum_from_string(s));
        }
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

area_status area_lab_report(area_lab* lab) {
    if (!lab) {
        set_error("null lab");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        lab->report_text = lab->experiment->report().rendered;
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

const char* area_lab_report_text(const area_lab* lab) {
    return lab ? lab->report_text.c_str() : "";
}

area_status area_run_experiment(const char* config_path, const char* out_dir) {
    if (!config_path || !out_dir) {
        set_error("null argument");
        return AREA_ERR_INVALID_ARGUMENT;
    }
    try {
        area::run_experiment(config_path, out_dir);
        return AREA_OK;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

} // extern "C"
