// SPDX-License-Identifier: Apache-2.0
#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "core/attention.hpp"
#include "core/errors.hpp"

namespace fs = std::filesystem;

namespace ugcemt {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

LabelMask argmax_mask(const Chans3<float>& probs) {
    const size_t n = probs.spatial();
    LabelMask m(probs.nz, probs.ny, probs.nx);
    for (size_t i = 0; i < n; ++i) {
        int best = 0;
        float bv = probs.v[i];
        for (int c = 1; c < probs.nc; ++c) {
            const float v = probs.v[size_t(c) * n + i];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        m.v[i] = uint8_t(best);
    }
    return m;
}

LabelMask binarize(const LabelMask& m) {
    LabelMask out = m;
    for (auto& v : out.v) v = v != 0;
    return out;
}

// Supervised loss with a per-voxel weight on the cross-entropy term; the
// soft Dice term is a global overlap and stays unweighted.
double supervised_loss_ce_weighted(const Chans3<float>& logits, const LabelMask& labels,
                                   const Grid3<float>& w, Chans3<float>* glogits) {
    Chans3<float> probs;
    softmax_channels(logits, probs);
    const size_t n = probs.spatial();
    const int C = probs.nc;
    Chans3<float> gbase;
    const double base = supervised_loss(logits, labels, glogits ? &gbase : nullptr);
    double ce_w = 0.0, ce_plain = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = double(probs.v[size_t(labels.v[i]) * n + i]);
        const double nl = -std::log(p > 1e-30 ? p : 1e-30);
        ce_w += double(w.v[i]) * nl;
        ce_plain += nl;
    }
    ce_w /= double(n);
    ce_plain /= double(n);
    const double value = base - 0.5 * ce_plain + 0.5 * ce_w;
    if (glogits) {
        *glogits = gbase;
        const double inv_n = 1.0 / double(n);
        for (int c = 0; c < C; ++c) {
            float* gl = glogits->chan(c);
            const float* pc = probs.chan(c);
            for (size_t i = 0; i < n; ++i) {
                const double onehot = labels.v[i] == c ? 1.0 : 0.0;
                gl[i] += float((double(w.v[i]) - 1.0) * 0.5 * inv_n *
                               (double(pc[i]) - onehot));
            }
        }
    }
    return value;
}

}  // namespace

LoadedDataset load_dataset(const std::string& data_dir, const TrainConfig& cfg) {
    LoadedDataset out;
    const auto manifest = load_manifest(data_dir + "/manifest.txt");
    std::vector<std::string> train_ids;
    for (const auto& [id, tag] : manifest) {
        Case c = load_case(data_dir, id);
        c.volume = normalize(c.volume);
        if (tag == "train") {
            out.train.push_back(std::move(c));
            train_ids.push_back(id);
        } else if (tag == "test") {
            out.test.push_back(std::move(c));
        } else {
            throw DataError("unknown manifest tag: " + tag);
        }
    }
    if (out.train.empty()) throw DataError("dataset has no training volumes");
    const auto [lab, unlab] = split_labeled(train_ids, cfg.labeled_fraction, cfg.seed);
    std::map<std::string, size_t> pos;
    for (size_t i = 0; i < out.train.size(); ++i) pos[out.train[i].id] = i;
    for (const auto& id : lab) out.labeled_idx.push_back(pos.at(id));
    for (const auto& id : unlab) out.unlabeled_idx.push_back(pos.at(id));
    return out;
}

Volume perturb_input(const Volume& x, double sigma, uint64_t seed) {
    Volume out = x;
    if (sigma <= 0.0) return out;
    Rng rng(seed);
    for (auto& v : out.g.v) v = float(double(v) + sigma * rng.gaussian());
    return out;
}

struct Trainer::Slot {
    const Case* source = nullptr;
    bool labeled = false;
    Case patch;
    CropCorner corner;
    Grid3<float> x_student, x_teacher;
    uint64_t drop_seed_student = 0;
    Chans3<float> teacher_probs;
    Mat<float> xt_tokens;
    std::optional<Grid3<float>> weight;
    LabelMask pseudo;
};

Trainer::Trainer(TrainConfig cfg, const LoadedDataset* data)
    : cfg_(std::move(cfg)), data_(data) {
    state_.topo = make_topo(cfg_.net);
}

void Trainer::init_state() {
    state_.student = build_network(state_.topo, derive_seed(cfg_.seed, "init-student"));
    state_.teacher = init_teacher(state_.student, cfg_.ewa_beta);
    state_.opt = {};
    state_.step = 0;
    state_.phase = 1;
    ugms_.clear();
    ugm_by_train_idx_.assign(data_ ? data_->train.size() : 0, -1);
}

void Trainer::set_ugms(std::vector<UncertaintyMap> ugms) {
    ugms_ = std::move(ugms);
    ugm_by_train_idx_.assign(data_->train.size(), -1);
    std::map<std::string, int> by_id;
    for (size_t i = 0; i < ugms_.size(); ++i) by_id[ugms_[i].source_id] = int(i);
    for (size_t i = 0; i < data_->train.size(); ++i) {
        auto it = by_id.find(data_->train[i].id);
        if (it != by_id.end()) ugm_by_train_idx_[i] = it->second;
    }
}

std::vector<const Case*> Trainer::unlabeled_cases() const {
    std::vector<const Case*> out;
    for (size_t i : data_->unlabeled_idx) out.push_back(&data_->train[i]);
    return out;
}

double Trainer::mean_unlabeled_entropy(const ParamSet& params) const {
    const auto cases = unlabeled_cases();
    if (cases.empty()) return 0.0;
    const auto maps =
        build_ugm(state_.topo, params, cases, cfg_.t_mc, derive_seed(cfg_.seed, "ugm-probe"));
    double sum = 0.0;
    size_t n = 0;
    for (const auto& u : maps) {
        for (float e : u.entropy.v) sum += double(e);
        n += u.entropy.v.size();
    }
    return sum / double(n);
}

void Trainer::build_batch(std::vector<Slot>& slots) const {
    const uint64_t step = uint64_t(state_.step);
    const uint64_t phase = uint64_t(state_.phase);
    const int n_lab = cfg_.labeled_per_batch();
    const int n_total = cfg_.batch_size;
    Rng pick(derive_seed(cfg_.seed, "batch-pick", phase, step));
    slots.clear();
    slots.resize(size_t(n_total));
    const double ln_c = std::log(double(cfg_.net.num_classes));
    for (int i = 0; i < n_total; ++i) {
        Slot& s = slots[size_t(i)];
        s.labeled = i < n_lab;
        const auto& pool = (s.labeled || data_->unlabeled_idx.empty()) ? data_->labeled_idx
                                                                       : data_->unlabeled_idx;
        const size_t train_idx = pool[pick.below(pool.size())];
        s.source = &data_->train[train_idx];
        s.corner = choose_crop_corner(*s.source, cfg_.patch[0], cfg_.patch[1], cfg_.patch[2],
                                      derive_seed(cfg_.seed, "crop", phase, step, uint64_t(i)),
                                      cfg_.fg_bias);
        s.patch = crop_case_at(*s.source, s.corner, cfg_.patch[0], cfg_.patch[1], cfg_.patch[2]);
        s.drop_seed_student = derive_seed(cfg_.seed, "drop-s", phase, step, uint64_t(i));

        // Input noise is the consistency perturbation (zeta); the plain
        // supervised baseline trains on random crops only.
        if (cfg_.supervised_only) {
            s.x_student = s.patch.volume.g;
            continue;
        }
        s.x_student = perturb_input(s.patch.volume, cfg_.noise_sigma,
                                    derive_seed(cfg_.seed, "noise-s", phase, step, uint64_t(i)))
                          .g;

        // teacher input; optionally entropy-modulated noise in phase 2
        const int ugm_slot = ugm_by_train_idx_.empty() ? -1 : ugm_by_train_idx_[train_idx];
        if (state_.phase == 2 && cfg_.ugm_noise_mod && ugm_slot >= 0) {
            const Grid3<float> ent = crop_grid_at(ugms_[size_t(ugm_slot)].entropy, s.corner,
                                                  cfg_.patch[0], cfg_.patch[1], cfg_.patch[2]);
            s.x_teacher = s.patch.volume.g;
            Rng rng(derive_seed(cfg_.seed, "noise-t", phase, step, uint64_t(i)));
            for (size_t k = 0; k < s.x_teacher.v.size(); ++k) {
                const double amp = cfg_.noise_sigma * double(ent.v[k]) / ln_c;
                s.x_teacher.v[k] = float(double(s.x_teacher.v[k]) + amp * rng.gaussian());
            }
        } else {
            s.x_teacher =
                perturb_input(s.patch.volume, cfg_.noise_sigma,
                              derive_seed(cfg_.seed, "noise-t", phase, step, uint64_t(i)))
                    .g;
        }

        // frozen teacher target for this step
        const uint64_t drop_t = derive_seed(cfg_.seed, "drop-t", phase, step, uint64_t(i));
        VNetEncState<float> enc_t;
        vnet_encode(state_.topo, state_.teacher.params, s.x_teacher, {true, drop_t}, enc_t);
        VNetDecState<float> dec_t;
        if (cfg_.use_ca) {
            VNetEncState<float> enc_s0;
            vnet_encode(state_.topo, state_.student, s.x_student, {true, s.drop_seed_student},
                        enc_s0);
            const auto xs0 = tokenize(enc_s0.bottleneck());
            const auto xt = tokenize(enc_t.bottleneck());
            s.xt_tokens = xt.tokens;
            auto ca = cross_attention_block(xs0.tokens, xt.tokens, state_.student);
            TokenizedFeatures<float> xtp{std::move(ca.xt_prime), xt.nz, xt.ny, xt.nx};
            vnet_decode(state_.topo, state_.teacher.params, untokenize(xtp), enc_t,
                        {true, drop_t}, dec_t);
        } else {
            vnet_decode(state_.topo, state_.teacher.params, enc_t.bottleneck(), enc_t,
                        {true, drop_t}, dec_t);
        }
        softmax_channels(dec_t.logits, s.teacher_probs);

        if (cfg_.mode == TrainMode::PLG) {
            s.pseudo = argmax_mask(s.teacher_probs);
            continue;
        }
        if (!cfg_.use_ugm) continue;
        if (state_.phase == 1) {
            const auto preds =
                mc_forward(state_.topo, state_.teacher.params, s.x_teacher, cfg_.t_mc,
                           derive_seed(cfg_.seed, "mc-step", phase, step, uint64_t(i)));
            s.weight = mean_and_entropy(preds).weight;
        } else if (ugm_slot >= 0) {
            s.weight = crop_grid_at(ugms_[size_t(ugm_slot)].weight, s.corner, cfg_.patch[0],
                                    cfg_.patch[1], cfg_.patch[2]);
        } else if (!s.labeled) {
            throw DataError("missing UGM for unlabeled volume " + s.source->id);
        }
    }
}

double Trainer::loss_eval(const std::vector<float>& w, std::vector<float>& grad,
                          std::vector<Slot>& slots, double lambda, StepStats* capture) const {
    FlatParams<float> p;
    p.layout = state_.topo.layout;
    p.data = w;
    const int n_lab = cfg_.labeled_per_batch();
    const int n_total = cfg_.batch_size;
    double sup_sum = 0.0, cons_sum = 0.0;
    double disp_sum = 0.0;
    int disp_n = 0;
    for (auto& s : slots) {
        VNetEncState<float> enc;
        vnet_encode(state_.topo, p, s.x_student, {true, s.drop_seed_student}, enc);
        VNetDecState<float> dec;
        CrossAttentionCache<float> ca_cache;
        int tok_nz = 0, tok_ny = 0, tok_nx = 0;
        const bool couple = cfg_.use_ca && !cfg_.supervised_only;
        if (couple) {
            const auto xs_tok = tokenize(enc.bottleneck());
            tok_nz = xs_tok.nz;
            tok_ny = xs_tok.ny;
            tok_nx = xs_tok.nx;
            auto ca = cross_attention_block(xs_tok.tokens, s.xt_tokens, p, &ca_cache);
            TokenizedFeatures<float> xsp{std::move(ca.xs_prime), tok_nz, tok_ny, tok_nx};
            vnet_decode(state_.topo, p, untokenize(xsp), enc, {true, s.drop_seed_student}, dec);
        } else {
            vnet_decode(state_.topo, p, enc.bottleneck(), enc, {true, s.drop_seed_student},
                        dec);
        }
        Chans3<float> probs;
        softmax_channels(dec.logits, probs);

        Chans3<float> glogits(dec.logits.nc, dec.logits.nz, dec.logits.ny, dec.logits.nx);
        if (s.labeled) {
            Chans3<float> gsup;
            double sup;
            if (cfg_.sup_ugm_weight && state_.phase == 2 && s.weight) {
                sup = supervised_loss_ce_weighted(dec.logits, s.patch.label, *s.weight, &gsup);
            } else {
                sup = supervised_loss(dec.logits, s.patch.label, &gsup);
            }
            sup_sum += sup;
            const float scale = 1.0f / float(n_lab);
            for (size_t k = 0; k < glogits.v.size(); ++k) glogits.v[k] += scale * gsup.v[k];
        }
        if (!cfg_.supervised_only) {
            double cons;
            Chans3<float> gcons;
            if (cfg_.mode == TrainMode::PLG) {
                cons = pseudo_label_ce(dec.logits, s.pseudo, &gcons);
            } else {
                Chans3<float> gprobs;
                const Grid3<float>* wgt = s.weight ? &*s.weight : nullptr;
                cons = consistency_loss(probs, s.teacher_probs, wgt, &gprobs);
                softmax_backward(probs, gprobs, gcons);
            }
            cons_sum += cons;
            const float scale = float(lambda / double(n_total));
            for (size_t k = 0; k < glogits.v.size(); ++k) glogits.v[k] += scale * gcons.v[k];
            if (capture) {
                disp_sum += disparity(argmax_mask(probs), argmax_mask(s.teacher_probs));
                disp_n += 1;
            }
        }

        Chans3<float> gbott;
        vnet_decode_backward(state_.topo, p, enc, dec, glogits, grad, gbott);
        if (couple) {
            TokenizedFeatures<float> gtok = tokenize(gbott);
            Mat<float> gxs = cross_attention_backward(ca_cache, p, gtok.tokens, grad);
            TokenizedFeatures<float> gxs_tok{std::move(gxs), tok_nz, tok_ny, tok_nx};
            const Chans3<float> gb2 = untokenize(gxs_tok);
            vnet_encode_backward(state_.topo, p, enc, gb2, dec.gskip, grad);
        } else {
            vnet_encode_backward(state_.topo, p, enc, gbott, dec.gskip, grad);
        }
    }
    const double sup_mean = n_lab > 0 ? sup_sum / double(n_lab) : 0.0;
    const double cons_mean = cfg_.supervised_only ? 0.0 : cons_sum / double(n_total);
    const LossBreakdown b = total_objective(
        sup_mean, cons_mean, state_.phase == 2 ? cfg_.t_max : state_.step, cfg_.t_max);
    if (capture) {
        capture->loss = b;
        capture->disparity = disp_n > 0 ? disp_sum / double(disp_n) : 0.0;
    }
    return b.total;
}

StepStats Trainer::train_step() {
    std::vector<Slot> slots;
    build_batch(slots);
    // phase 1 ramps the consistency weight; phase 2 retrains with it held at
    // its final value so the uncertainty-guided weighting acts from step one
    const double lambda =
        rampup(state_.phase == 2 ? cfg_.t_max : state_.step, cfg_.t_max);
    StepStats stats;
    int eval_count = 0;
    LossEval<float> eval = [&](const std::vector<float>& w, std::vector<float>& grad) {
        StepStats* cap = eval_count == 0 ? &stats : nullptr;
        ++eval_count;
        return loss_eval(w, grad, slots, lambda, cap);
    };
    SamConfig sam = cfg_.sam;
    if (state_.phase == 2) sam.lr *= cfg_.phase2_lr_scale;
    try {
        sam_step(eval, state_.opt, state_.student.data, sam);
    } catch (const NumericError& e) {
        std::string ids;
        for (const auto& s : slots) ids += (ids.empty() ? "" : ",") + s.source->id;
        throw NumericError(std::string(e.what()) + " (batch: " + ids + ")");
    }
    if (cfg_.use_ewa) {
        ewa_update(state_.teacher, state_.student);
    } else {
        state_.teacher.params = state_.student;
        state_.teacher.steps_seen += 1;
    }
    state_.step += 1;
    return stats;
}

EvalSummary Trainer::evaluate() const {
    EvalSummary out;
    double hd_sum = 0.0, asd_sum = 0.0, disp_sum = 0.0;
    for (const Case& c : data_->test) {
        const auto rs = vnet_forward(state_.topo, state_.student, c.volume.g, false, 0);
        const LabelMask pred = binarize(argmax_mask(rs.softmax));
        MetricReport r = evaluate_masks(pred, binarize(c.label), c.volume.spacing, c.id);
        if (!cfg_.supervised_only) {
            const auto rt =
                vnet_forward(state_.topo, state_.teacher.params, c.volume.g, false, 0);
            disp_sum += disparity(pred, binarize(argmax_mask(rt.softmax)));
        }
        out.mean_dice += r.dice;
        out.mean_jaccard += r.jaccard;
        if (r.surface_defined) {
            hd_sum += r.hd95;
            asd_sum += r.asd;
            out.surface_defined += 1;
        }
        out.cases.push_back(std::move(r));
    }
    const double n = double(out.cases.size());
    if (n > 0) {
        out.mean_dice /= n;
        out.mean_jaccard /= n;
        out.mean_disparity = disp_sum / n;
    }
    if (out.surface_defined > 0) {
        out.mean_hd95 = hd_sum / double(out.surface_defined);
        out.mean_asd = asd_sum / double(out.surface_defined);
    } else {
        out.mean_hd95 = std::numeric_limits<double>::quiet_NaN();
        out.mean_asd = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

void save_checkpoint(const std::string& path, const TrainState& st) {
    ParamSet momentum;
    momentum.layout = st.student.layout;
    momentum.data = st.opt.momentum_buf.empty()
                        ? std::vector<float>(st.student.data.size(), 0.f)
                        : st.opt.momentum_buf;
    auto meta_layout = std::make_shared<ParamLayout>();
    meta_layout->add("step", {1});
    meta_layout->add("phase", {1});
    meta_layout->add("steps_seen", {1});
    meta_layout->add("beta", {1});
    meta_layout->add("opt_step", {1});
    ParamSet meta{LayoutPtr(meta_layout)};
    meta.scalar("step") = float(st.step);
    meta.scalar("phase") = float(st.phase);
    meta.scalar("steps_seen") = float(st.teacher.steps_seen);
    meta.scalar("beta") = float(st.teacher.beta);
    meta.scalar("opt_step") = float(st.opt.step);
    save_param_groups({{"student", &st.student},
                       {"teacher", &st.teacher.params},
                       {"momentum", &momentum},
                       {"meta", &meta}},
                      path);
}

TrainState load_checkpoint_with_spec(const std::string& path, const NetworkSpec& spec) {
    auto groups = load_param_groups(path);
    TrainState st;
    st.topo = make_topo(spec);
    ParamSet student, teacher, momentum, meta;
    for (auto& [name, p] : groups) {
        if (name == "student")
            student = std::move(p);
        else if (name == "teacher")
            teacher = std::move(p);
        else if (name == "momentum")
            momentum = std::move(p);
        else if (name == "meta")
            meta = std::move(p);
        else
            throw FormatError(path + ": unexpected checkpoint group " + name);
    }
    if (!student.layout || !teacher.layout || !momentum.layout || !meta.layout)
        throw FormatError(path + ": checkpoint is missing required groups");
    if (!student.layout->congruent(*st.topo.layout))
        throw StateError(path + ": checkpoint does not match the configured network");
    st.student = std::move(student);
    st.student.layout = st.topo.layout;
    st.teacher.params = std::move(teacher);
    st.teacher.params.layout = st.topo.layout;
    st.teacher.beta = double(meta.scalar("beta"));
    st.teacher.steps_seen = long(meta.scalar("steps_seen"));
    st.opt.momentum_buf = std::move(momentum.data);
    st.opt.step = long(meta.scalar("opt_step"));
    st.step = long(meta.scalar("step"));
    st.phase = int(meta.scalar("phase"));
    return st;
}

TrainState load_checkpoint(const std::string& path) {
    return load_checkpoint_with_spec(path, NetworkSpec{});
}

void write_eval_csv(const std::string& path, const EvalSummary& s) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "case_id,dice,jaccard,hd95,asd\n";
    for (const auto& r : s.cases)
        os << r.case_id << "," << fmt_g(r.dice) << "," << fmt_g(r.jaccard) << ","
           << fmt_g(r.hd95) << "," << fmt_g(r.asd) << "\n";
    os << "mean," << fmt_g(s.mean_dice) << "," << fmt_g(s.mean_jaccard) << ","
       << fmt_g(s.mean_hd95) << "," << fmt_g(s.mean_asd) << "\n";
}

PhaseOutcome Trainer::run_phase(int phase) {
    const fs::path dir = fs::path(cfg_.out_dir) / ("phase" + std::to_string(phase));
    fs::create_directories(dir);
    std::ofstream losses(dir / "losses.csv");
    losses << "step,supervised,consistency,lambda,total\n";
    std::ofstream disp(dir / "disparity.csv");
    disp << "step,disparity\n";
    std::ofstream metrics(dir / "metrics.csv");
    metrics << "step,dice,jaccard,hd95,asd,disparity\n";

    PhaseOutcome out;
    const bool probe_entropy = cfg_.use_ugm && !cfg_.supervised_only && phase == 1;
    if (probe_entropy) out.initial_entropy = mean_unlabeled_entropy(state_.teacher.params);

    auto metrics_row = [&](long step, const EvalSummary& e) {
        metrics << step << "," << fmt_g(e.mean_dice) << "," << fmt_g(e.mean_jaccard) << ","
                << fmt_g(e.mean_hd95) << "," << fmt_g(e.mean_asd) << ","
                << fmt_g(e.mean_disparity) << "\n";
        metrics.flush();
    };
    for (long t = 0; t < cfg_.t_max; ++t) {
        const StepStats s = train_step();
        losses << t << "," << fmt_g(s.loss.supervised) << "," << fmt_g(s.loss.consistency)
               << "," << fmt_g(s.loss.lambda_t) << "," << fmt_g(s.loss.total) << "\n";
        disp << t << "," << fmt_g(s.disparity) << "\n";
        if ((t + 1) % cfg_.eval_every == 0 && t + 1 != cfg_.t_max) metrics_row(t + 1, evaluate());
        if (phase == 2 && cfg_.recompute_ugm_every > 0 &&
            (t + 1) % cfg_.recompute_ugm_every == 0 && t + 1 < cfg_.t_max) {
            auto maps = build_ugm(state_.topo, state_.teacher.params, unlabeled_cases(),
                                  cfg_.t_mc, derive_seed(cfg_.seed, "ugm-probe"));
            set_ugms(std::move(maps));
        }
    }

    if (phase == 1 && cfg_.use_ugm && !cfg_.supervised_only) {
        auto cases = unlabeled_cases();
        if (cfg_.sup_ugm_weight)
            for (size_t i : data_->labeled_idx) cases.push_back(&data_->train[i]);
        auto maps = build_ugm(state_.topo, state_.teacher.params, cases, cfg_.t_mc,
                              derive_seed(cfg_.seed, "ugm-probe"));
        double sum = 0.0;
        size_t n = 0;
        for (size_t i = 0; i < data_->unlabeled_idx.size(); ++i) {
            for (float e : maps[i].entropy.v) sum += double(e);
            n += maps[i].entropy.v.size();
        }
        out.final_entropy = n > 0 ? sum / double(n) : 0.0;
        const fs::path ugm_dir = dir / "ugm";
        fs::create_directories(ugm_dir);
        for (const auto& u : maps) save_ugm(u, (ugm_dir / (u.source_id + ".ugm")).string());
        set_ugms(std::move(maps));
    }

    out.checkpoint_path = (dir / "checkpoint.ugp").string();
    save_checkpoint(out.checkpoint_path, state_);
    out.eval = evaluate();
    metrics_row(cfg_.t_max, out.eval);
    write_eval_csv((dir / "eval.csv").string(), out.eval);
    {
        std::ofstream summary(dir / "summary.txt");
        summary << "phase = " << phase << "\n";
        summary << "steps = " << cfg_.t_max << "\n";
        summary << "initial_entropy = " << fmt_g(out.initial_entropy) << "\n";
        summary << "final_entropy = " << fmt_g(out.final_entropy) << "\n";
        summary << "dice = " << fmt_g(out.eval.mean_dice) << "\n";
        summary << "jaccard = " << fmt_g(out.eval.mean_jaccard) << "\n";
        summary << "hd95 = " << fmt_g(out.eval.mean_hd95) << "\n";
        summary << "asd = " << fmt_g(out.eval.mean_asd) << "\n";
        summary << "disparity = " << fmt_g(out.eval.mean_disparity) << "\n";
    }
    return out;
}

PhaseOutcome Trainer::run_phase1() {
    state_.phase = 1;
    state_.step = 0;
    return run_phase(1);
}

PhaseOutcome Trainer::run_phase2() {
    if (cfg_.use_ugm && !data_->unlabeled_idx.empty() && ugms_.empty())
        throw StateError("phase 2 requires persisted UGMs");
    if (cfg_.phase2_cold_start) {
        state_.student = build_network(state_.topo, derive_seed(cfg_.seed, "init-student-p2"));
        state_.teacher = init_teacher(state_.student, cfg_.ewa_beta);
    }
    state_.opt = {};
    state_.step = 0;
    state_.phase = 2;
    return run_phase(2);
}

void generate_dataset_command(const KvConfig& kv, const std::string& out_dir) {
    const GenSettings g = make_gen_settings(kv);
    fs::create_directories(out_dir);
    SyntheticSpec spec;
    spec.n_volumes = g.n_volumes;
    spec.shape[0] = g.shape[0];
    spec.shape[1] = g.shape[1];
    spec.shape[2] = g.shape[2];
    spec.object = g.object;
    spec.radius_min_mm = g.radius_min;
    spec.radius_max_mm = g.radius_max;
    spec.noise_sigma = g.noise_sigma;
    spec.intensity_fg = g.intensity_fg;
    spec.intensity_bg = g.intensity_bg;
    spec.spacing = {g.spacing[0], g.spacing[1], g.spacing[2]};
    spec.seed = g.seed;
    spec.id_prefix = "case";
    std::vector<std::pair<std::string, std::string>> manifest;
    for (const Case& c : generate_synthetic(spec)) {
        save_case(out_dir, c);
        manifest.emplace_back(c.id, "train");
    }
    if (g.n_test > 0) {
        SyntheticSpec tspec = spec;
        tspec.n_volumes = g.n_test;
        tspec.seed = derive_seed(g.seed, "test-set");
        tspec.id_prefix = "test";
        for (const Case& c : generate_synthetic(tspec)) {
            save_case(out_dir, c);
            manifest.emplace_back(c.id, "test");
        }
    }
    save_manifest(out_dir + "/manifest.txt", manifest);
    to_kv(g).write_file(out_dir + "/gen_config.txt");
}

PhaseOutcome run_training(const TrainConfig& cfg, int phase) {
    fs::create_directories(cfg.out_dir);
    to_kv(cfg).write_file(cfg.out_dir + "/config.txt");
    LoadedDataset data = load_dataset(cfg.data_dir, cfg);
    {
        std::vector<std::pair<std::string, std::string>> split;
        for (size_t i : data.labeled_idx) split.emplace_back(data.train[i].id, "labeled");
        for (size_t i : data.unlabeled_idx) split.emplace_back(data.train[i].id, "unlabeled");
        save_manifest(cfg.out_dir + "/split.txt", split);
    }
    Trainer tr(cfg, &data);
    tr.init_state();
    PhaseOutcome out;
    if (phase == 1 || phase == 0) {
        out = tr.run_phase1();
        if (phase == 1) return out;
    }
    if (phase == 2 || phase == 0) {
        if (phase == 2) {
            const std::string ckpt = cfg.out_dir + "/phase1/checkpoint.ugp";
            tr.state() = load_checkpoint_with_spec(ckpt, cfg.net);
            if (cfg.use_ugm) {
                std::vector<UncertaintyMap> maps;
                const fs::path ugm_dir = fs::path(cfg.out_dir) / "phase1" / "ugm";
                if (fs::exists(ugm_dir)) {
                    std::vector<std::string> files;
                    for (const auto& e : fs::directory_iterator(ugm_dir))
                        files.push_back(e.path().string());
                    std::sort(files.begin(), files.end());
                    for (const auto& f : files) maps.push_back(load_ugm(f));
                }
                tr.set_ugms(std::move(maps));
            }
        }
        out = tr.run_phase2();
    }
    return out;
}

EvalSummary run_evaluation(const TrainConfig& cfg, const std::string& checkpoint_path,
                           const std::string& out_csv) {
    LoadedDataset data = load_dataset(cfg.data_dir, cfg);
    Trainer tr(cfg, &data);
    tr.state() = load_checkpoint_with_spec(checkpoint_path, cfg.net);
    const EvalSummary s = tr.evaluate();
    if (!out_csv.empty()) write_eval_csv(out_csv, s);
    return s;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::string& out_dir) {
    struct RowDef {
        const char* name;
        const char* dir;
        bool ewa, ca, ugm;
    };
    const RowDef defs[4] = {{"Baseline", "baseline", false, false, false},
                            {"MT", "mt", true, false, false},
                            {"CEMT", "cemt", true, true, false},
                            {"UG-CEMT", "ugcemt", true, true, true}};
    std::vector<AblationRow> rows;
    for (const RowDef& d : defs) {
        TrainConfig cfg = base;
        cfg.use_ewa = d.ewa;
        cfg.use_ca = d.ca;
        cfg.use_ugm = d.ugm;
        cfg.mode = TrainMode::CR;
        cfg.supervised_only = false;
        cfg.out_dir = out_dir + "/" + d.dir;
        const PhaseOutcome out = run_training(cfg, d.ugm ? 0 : 1);
        AblationRow row;
        row.name = d.name;
        row.ewa = d.ewa;
        row.ca = d.ca;
        row.ugm = d.ugm;
        row.dice = out.eval.mean_dice;
        row.jaccard = out.eval.mean_jaccard;
        row.hd95 = out.eval.mean_hd95;
        row.asd = out.eval.mean_asd;
        rows.push_back(row);
    }
    std::ofstream os(out_dir + "/ablation.csv");
    if (!os) throw IoError("cannot open for writing: " + out_dir + "/ablation.csv");
    os << "study,st,ca,ewa,u,dice,jaccard,hd95,asd\n";
    for (const auto& r : rows)
        os << r.name << ",1," << (r.ca ? 1 : 0) << "," << (r.ewa ? 1 : 0) << ","
           << (r.ugm ? 1 : 0) << "," << fmt_g(r.dice) << "," << fmt_g(r.jaccard) << ","
           << fmt_g(r.hd95) << "," << fmt_g(r.asd) << "\n";
    return rows;
}

}  // namespace ugcemt
