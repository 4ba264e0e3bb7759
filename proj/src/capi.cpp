// SPDX-License-Identifier: Apache-2.0
#include "ugcemt/ugcemt.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/metrics.hpp"
#include "core/plot.hpp"
#include "core/trainer.hpp"

using namespace ugcemt;

namespace {

thread_local std::string g_last_error;

ugc_status fail(ugc_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

// Maps the core exception taxonomy onto status codes.
template <class Fn>
ugc_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return UGC_OK;
    } catch (const ConfigError& e) {
        return fail(UGC_ERR_CONFIG, e.what());
    } catch (const ShapeError& e) {
        return fail(UGC_ERR_SHAPE, e.what());
    } catch (const DataError& e) {
        return fail(UGC_ERR_DATA, e.what());
    } catch (const FormatError& e) {
        return fail(UGC_ERR_FORMAT, e.what());
    } catch (const NumericError& e) {
        return fail(UGC_ERR_NUMERIC, e.what());
    } catch (const StateError& e) {
        return fail(UGC_ERR_STATE, e.what());
    } catch (const IoError& e) {
        return fail(UGC_ERR_IO, e.what());
    } catch (const MetricUndefinedError& e) {
        return fail(UGC_ERR_METRIC, e.what());
    } catch (const std::exception& e) {
        return fail(UGC_ERR_UNKNOWN, e.what());
    } catch (...) {
        return fail(UGC_ERR_UNKNOWN, "unknown error");
    }
}

}  // namespace

struct ugc_config {
    KvConfig kv;
};

extern "C" {

const char* ugc_version(void) { return "0.1.0"; }

const char* ugc_status_name(ugc_status s) {
    switch (s) {
        case UGC_OK: return "ok";
        case UGC_ERR_CONFIG: return "config-error";
        case UGC_ERR_SHAPE: return "shape-error";
        case UGC_ERR_DATA: return "data-error";
        case UGC_ERR_FORMAT: return "format-error";
        case UGC_ERR_NUMERIC: return "numeric-error";
        case UGC_ERR_STATE: return "state-error";
        case UGC_ERR_IO: return "io-error";
        case UGC_ERR_METRIC: return "metric-undefined";
        default: return "unknown-error";
    }
}

const char* ugc_last_error(void) { return g_last_error.c_str(); }

ugc_config* ugc_config_create(void) { return new ugc_config(); }

void ugc_config_destroy(ugc_config* c) { delete c; }

ugc_status ugc_config_load_file(ugc_config* c, const char* path) {
    if (!c || !path) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] { c->kv.load_file(path); });
}

ugc_status ugc_config_set(ugc_config* c, const char* key, const char* value) {
    if (!c || !key || !value) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] { c->kv.set(key, value); });
}

ugc_status ugc_config_get(const ugc_config* c, const char* key, char* buf, size_t buf_len) {
    if (!c || !key || !buf || buf_len == 0) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        if (!c->kv.has(key)) throw StateError(std::string("config key not set: ") + key);
        const std::string v = c->kv.get(key, "");
        if (v.size() + 1 > buf_len) throw StateError("buffer too small");
        std::memcpy(buf, v.c_str(), v.size() + 1);
    });
}

ugc_status ugc_config_validate(const ugc_config* c) {
    if (!c) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] { make_train_config(c->kv); });
}

ugc_status ugc_config_write_file(const ugc_config* c, const char* path) {
    if (!c || !path) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] { c->kv.write_file(path); });
}

ugc_status ugc_generate_dataset(const ugc_config* c, const char* out_dir) {
    if (!c || !out_dir) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] { generate_dataset_command(c->kv, out_dir); });
}

ugc_status ugc_train(const ugc_config* c, int phase) {
    if (!c) return fail(UGC_ERR_STATE, "null argument");
    if (phase < 0 || phase > 2) return fail(UGC_ERR_CONFIG, "phase must be 0, 1, or 2");
    return guarded([&] {
        const TrainConfig cfg = make_train_config(c->kv);
        run_training(cfg, phase);
    });
}

ugc_status ugc_evaluate(const ugc_config* c, const char* checkpoint_path, const char* out_csv) {
    if (!c || !checkpoint_path || !out_csv) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        const TrainConfig cfg = make_train_config(c->kv);
        run_evaluation(cfg, checkpoint_path, out_csv);
    });
}

ugc_status ugc_ablate(const ugc_config* c, const char* out_dir) {
    if (!c || !out_dir) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        const TrainConfig cfg = make_train_config(c->kv);
        run_ablation(cfg, out_dir);
    });
}

ugc_status ugc_plot_losses(const char* losses_csv, const char* out_svg) {
    if (!losses_csv || !out_svg) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        const CsvTable t = read_csv(losses_csv);
        const auto steps = csv_column(t, "step");
        std::vector<Curve> curves;
        for (const char* col : {"supervised", "consistency", "total"})
            curves.push_back({col, steps, csv_column(t, col)});
        render_svg_curves(out_svg, "training losses", "step", "loss", curves);
    });
}

ugc_status ugc_plot_metric_comparison(const char* metrics_csv_a, const char* label_a,
                                      const char* metrics_csv_b, const char* label_b,
                                      const char* out_svg) {
    if (!metrics_csv_a || !label_a || !metrics_csv_b || !label_b || !out_svg)
        return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        const CsvTable a = read_csv(metrics_csv_a);
        const CsvTable b = read_csv(metrics_csv_b);
        const auto sa = csv_column(a, "step");
        const auto sb = csv_column(b, "step");
        std::vector<Panel> panels;
        for (const char* col : {"dice", "jaccard", "hd95", "asd"}) {
            Panel p;
            p.title = col;
            p.y_label = col;
            p.curves.push_back({label_a, sa, csv_column(a, col)});
            p.curves.push_back({label_b, sb, csv_column(b, col)});
            panels.push_back(std::move(p));
        }
        render_svg_panels(out_svg, "step", panels);
    });
}

ugc_status ugc_metrics_binary(const uint8_t* pred, const uint8_t* gt, const int dims[3],
                              const float spacing[3], double out[4]) {
    if (!pred || !gt || !dims || !spacing || !out) return fail(UGC_ERR_STATE, "null argument");
    return guarded([&] {
        if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
            throw ShapeError("dims must be positive");
        LabelMask p(dims[0], dims[1], dims[2]);
        LabelMask g(dims[0], dims[1], dims[2]);
        std::memcpy(p.v.data(), pred, p.v.size());
        std::memcpy(g.v.data(), gt, g.v.size());
        const Spacing sp{spacing[0], spacing[1], spacing[2]};
        out[0] = dice_overlap(p, g);
        out[1] = jaccard_overlap(p, g);
        out[2] = std::numeric_limits<double>::quiet_NaN();
        out[3] = std::numeric_limits<double>::quiet_NaN();
        out[2] = hd95_mm(p, g, sp);
        out[3] = asd_mm(p, g, sp);
    });
}

}  // extern "C"
