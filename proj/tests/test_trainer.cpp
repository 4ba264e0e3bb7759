// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/errors.hpp"
#include "core/trainer.hpp"
#include "support/test_util.hpp"

using namespace ugcemt;
namespace fs = std::filesystem;

namespace {

// Tiny dataset + config for fast loop tests.
struct Fixture {
    fs::path dir;
    TrainConfig cfg;
    LoadedDataset data;

    explicit Fixture(const std::string& name, uint64_t seed = 3) {
        dir = fs::temp_directory_path() / ("ugcemt_trainer_" + name);
        fs::remove_all(dir);
        KvConfig kv;
        kv.set("gen.n_volumes", "6");
        kv.set("gen.n_test", "2");
        kv.set("gen.shape", "16,16,16");
        kv.set("gen.radius_min", "4");
        kv.set("gen.radius_max", "6");
        kv.set("gen.noise_sigma", "0.4");
        kv.set("gen.spacing", "1,1,1");
        kv.set("gen.seed", "9");
        generate_dataset_command(kv, dir.string());

        cfg.data_dir = dir.string();
        cfg.out_dir = (dir / "run").string();
        cfg.net.levels = 2;
        cfg.net.base_channels = 2;
        cfg.labeled_fraction = 0.5;
        cfg.batch_size = 2;
        cfg.t_max = 4;
        cfg.seed = seed;
        cfg.noise_sigma = 0.1;
        cfg.patch[0] = 8;
        cfg.patch[1] = 8;
        cfg.patch[2] = 8;
        cfg.eval_every = 2;
        cfg.t_mc = 2;
        data = load_dataset(cfg.data_dir, cfg);
    }
    ~Fixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("perturb_input: identity, determinism, variance") {
    Volume v;
    v.g = Grid3<float>(40, 50, 50, 1.0f);
    const Volume same = perturb_input(v, 0.0, 7);
    CHECK(same.g.v == v.g.v);
    const Volume a = perturb_input(v, 0.7, 7);
    const Volume b = perturb_input(v, 0.7, 7);
    CHECK(a.g.v == b.g.v);
    CHECK(a.g.v != v.g.v);
    double var = 0.0;
    for (size_t i = 0; i < a.g.v.size(); ++i) {
        const double d = double(a.g.v[i]) - 1.0;
        var += d * d;
    }
    var /= double(a.g.v.size());
    CHECK(std::fabs(var - 0.49) / 0.49 < 0.05);
}

TEST_CASE("identical config and seeds give identical loss sequences") {
    Fixture f("determinism");
    Trainer t1(f.cfg, &f.data);
    t1.init_state();
    Trainer t2(f.cfg, &f.data);
    t2.init_state();
    for (int i = 0; i < 4; ++i) {
        const StepStats a = t1.train_step();
        const StepStats b = t2.train_step();
        CHECK(a.loss.supervised == b.loss.supervised);
        CHECK(a.loss.consistency == b.loss.consistency);
        CHECK(a.loss.lambda_t == b.loss.lambda_t);
        CHECK(a.loss.total == b.loss.total);
        CHECK(a.disparity == b.disparity);
    }
    CHECK(t1.state().student.data == t2.state().student.data);
    CHECK(t1.state().teacher.params.data == t2.state().teacher.params.data);
}

TEST_CASE("a step applies the EWA rule and the ramp schedule") {
    Fixture f("ewa");
    f.cfg.use_ugm = false;  // keep the step cheap
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    const std::vector<float> teacher_before = tr.state().teacher.params.data;
    const StepStats s = tr.train_step();
    const std::vector<float>& student_after = tr.state().student.data;
    const double beta = f.cfg.ewa_beta;
    for (size_t i = 0; i < teacher_before.size(); ++i) {
        const float expected =
            float(beta * double(teacher_before[i]) + (1.0 - beta) * double(student_after[i]));
        CHECK(tr.state().teacher.params.data[i] == expected);
    }
    CHECK(s.loss.lambda_t == rampup(0, f.cfg.t_max));
    const StepStats s2 = tr.train_step();
    CHECK(s2.loss.lambda_t == rampup(1, f.cfg.t_max));
}

TEST_CASE("without EWA the teacher is a copy of the student") {
    Fixture f("st-copy");
    f.cfg.use_ewa = false;
    f.cfg.use_ugm = false;
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    tr.train_step();
    CHECK(tr.state().teacher.params.data == tr.state().student.data);
}

TEST_CASE("phase 1 writes one UGM per unlabeled volume and lowers nothing it shouldn't") {
    Fixture f("phase1");
    f.cfg.t_max = 2;
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    const PhaseOutcome out = tr.run_phase1();
    CHECK(out.initial_entropy >= 0.0);
    CHECK(out.final_entropy >= 0.0);
    size_t ugm_files = 0;
    for (const auto& e : fs::directory_iterator(fs::path(f.cfg.out_dir) / "phase1" / "ugm"))
        ++ugm_files, (void)e;
    CHECK(ugm_files == f.data.unlabeled_idx.size());
    CHECK(fs::exists(fs::path(f.cfg.out_dir) / "phase1" / "losses.csv"));
    CHECK(fs::exists(out.checkpoint_path));

    // checkpoint round trip is bitwise
    const TrainState st = load_checkpoint_with_spec(out.checkpoint_path, f.cfg.net);
    CHECK(st.student.data == tr.state().student.data);
    CHECK(st.teacher.params.data == tr.state().teacher.params.data);
    CHECK(st.step == tr.state().step);
    const std::string again = (fs::path(f.cfg.out_dir) / "again.ugp").string();
    save_checkpoint(again, st);
    std::ifstream a(out.checkpoint_path, std::ios::binary), b(again, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
}

TEST_CASE("all-ones UGMs reproduce uniform-weight phase-2 dynamics") {
    Fixture f("uniform");
    f.cfg.t_max = 3;

    auto ones_ugms = [&] {
        std::vector<UncertaintyMap> maps;
        for (size_t i : f.data.unlabeled_idx) {
            UncertaintyMap u;
            const auto& c = f.data.train[i];
            u.entropy = Grid3<float>(c.volume.g.nz, c.volume.g.ny, c.volume.g.nx, 0.0f);
            u.weight = Grid3<float>(c.volume.g.nz, c.volume.g.ny, c.volume.g.nx, 1.0f);
            u.source_id = c.id;
            u.t_used = 2;
            maps.push_back(std::move(u));
        }
        return maps;
    };

    TrainConfig with_ugm = f.cfg;
    with_ugm.out_dir = (f.dir / "with").string();
    Trainer t1(with_ugm, &f.data);
    t1.init_state();
    t1.set_ugms(ones_ugms());
    t1.state().phase = 2;

    TrainConfig without = f.cfg;
    without.use_ugm = false;
    without.out_dir = (f.dir / "without").string();
    Trainer t2(without, &f.data);
    t2.init_state();
    t2.state().phase = 2;

    for (int i = 0; i < 3; ++i) {
        const StepStats a = t1.train_step();
        const StepStats b = t2.train_step();
        CHECK(a.loss.total == b.loss.total);
    }
    CHECK(t1.state().student.data == t2.state().student.data);
}

TEST_CASE("half weights halve the consistency term") {
    Fixture f("half");
    auto half_ugms = [&] {
        std::vector<UncertaintyMap> maps;
        for (size_t i : f.data.unlabeled_idx) {
            UncertaintyMap u;
            const auto& c = f.data.train[i];
            u.entropy =
                Grid3<float>(c.volume.g.nz, c.volume.g.ny, c.volume.g.nx, float(std::log(2.0)));
            u.weight = Grid3<float>(c.volume.g.nz, c.volume.g.ny, c.volume.g.nx, 0.5f);
            u.source_id = c.id;
            u.t_used = 2;
            maps.push_back(std::move(u));
        }
        return maps;
    };
    // make every batch slot unlabeled-weighted by sampling only unlabeled
    TrainConfig a_cfg = f.cfg;
    a_cfg.labeled_fraction = 0.5;
    Trainer t1(a_cfg, &f.data);
    t1.init_state();
    t1.set_ugms(half_ugms());
    t1.state().phase = 2;

    TrainConfig b_cfg = a_cfg;
    b_cfg.use_ugm = false;
    Trainer t2(b_cfg, &f.data);
    t2.init_state();
    t2.state().phase = 2;

    const StepStats a = t1.train_step();
    const StepStats b = t2.train_step();
    // batch = 1 labeled (uniform weight) + 1 unlabeled (halved)
    CHECK(a.loss.consistency < b.loss.consistency);
    CHECK(a.loss.supervised == b.loss.supervised);

    // linear scaling: with quarter weights, the uniform-vs-weighted gap is
    // exactly 1.5x the gap at half weights (same unlabeled contribution)
    auto quarter_ugms = [&] {
        auto maps = half_ugms();
        for (auto& u : maps)
            for (auto& w : u.weight.v) w = 0.25f;
        return maps;
    };
    Trainer t3(a_cfg, &f.data);
    t3.init_state();
    t3.set_ugms(quarter_ugms());
    t3.state().phase = 2;
    const StepStats c = t3.train_step();
    const double gap_half = b.loss.consistency - a.loss.consistency;
    const double gap_quarter = b.loss.consistency - c.loss.consistency;
    CHECK(gap_quarter == doctest::Approx(1.5 * gap_half).epsilon(1e-5));
}

TEST_CASE("fully labeled data still exercises the consistency term") {
    Fixture f("fully-labeled");
    f.cfg.labeled_fraction = 1.0;
    f.cfg.use_ugm = false;
    f.cfg.t_max = 2;
    LoadedDataset data = load_dataset(f.cfg.data_dir, f.cfg);
    CHECK(data.unlabeled_idx.empty());
    Trainer tr(f.cfg, &data);
    tr.init_state();
    const StepStats s = tr.train_step();
    CHECK(s.loss.consistency > 0.0);
}

TEST_CASE("missing UGM for an unlabeled volume is a data error in phase 2") {
    Fixture f("missing-ugm");
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    tr.set_ugms({});  // nothing persisted
    tr.state().phase = 2;
    CHECK_THROWS_AS(tr.train_step(), DataError);
    CHECK_THROWS_AS(tr.run_phase2(), StateError);
}

TEST_CASE("PLG mode trains against hard teacher labels") {
    Fixture f("plg");
    f.cfg.mode = TrainMode::PLG;
    f.cfg.use_ugm = false;
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    const StepStats s = tr.train_step();
    CHECK(s.loss.consistency > 0.0);
    CHECK(std::isfinite(s.loss.total));
}

TEST_CASE("evaluation is deterministic and near the chance baseline for a random net") {
    Fixture f("eval");
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    const EvalSummary a = tr.evaluate();
    const EvalSummary b = tr.evaluate();
    REQUIRE(a.cases.size() == f.data.test.size());
    for (size_t i = 0; i < a.cases.size(); ++i) {
        CHECK(a.cases[i].dice == b.cases[i].dice);
        CHECK(a.cases[i].jaccard == b.cases[i].jaccard);
    }
    // disparity of a fresh teacher (identical params) is zero
    CHECK(a.mean_disparity == 0.0);

    // chance-level oracle: for a predictor firing on fraction q of voxels
    // independently of the truth (fraction p), expected dice is 2qp/(q+p)
    double q_sum = 0.0, p_sum = 0.0, dice_sum = 0.0;
    for (const Case& c : f.data.test) {
        const auto r = vnet_forward(tr.state().topo, tr.state().student, c.volume.g, false, 0);
        const size_t n = r.softmax.spatial();
        size_t fg_pred = 0, fg_true = 0;
        LabelMask pred(c.label.nz, c.label.ny, c.label.nx);
        for (size_t i = 0; i < n; ++i) {
            pred.v[i] = r.softmax.v[n + i] > r.softmax.v[i] ? 1 : 0;
            fg_pred += pred.v[i];
            fg_true += c.label.v[i] != 0;
        }
        q_sum += double(fg_pred) / double(n);
        p_sum += double(fg_true) / double(n);
        dice_sum += dice_overlap(pred, c.label);
    }
    const double q = q_sum / double(f.data.test.size());
    const double p = p_sum / double(f.data.test.size());
    const double dice = dice_sum / double(f.data.test.size());
    const double expected = (q + p) > 0 ? 2.0 * q * p / (q + p) : 1.0;
    CHECK(std::fabs(dice - expected) < 0.15);
}

TEST_CASE("supervised-only mode ignores unlabeled data entirely") {
    Fixture f("suponly");
    f.cfg.supervised_only = true;
    f.cfg.batch_size = 2;
    Trainer tr(f.cfg, &f.data);
    tr.init_state();
    const StepStats s = tr.train_step();
    CHECK(s.loss.consistency == 0.0);
    CHECK(s.loss.total == s.loss.supervised);
}

TEST_CASE("ablation study emits the four canonical rows") {
    Fixture f("ablate");
    f.cfg.t_max = 2;
    f.cfg.eval_every = 2;
    const auto rows = run_ablation(f.cfg, (f.dir / "ablation").string());
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].name == "Baseline");
    CHECK(rows[1].name == "MT");
    CHECK(rows[2].name == "CEMT");
    CHECK(rows[3].name == "UG-CEMT");
    // csv has a header plus exactly four rows with the same labels
    std::ifstream is(f.dir / "ablation" / "ablation.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "study,st,ca,ewa,u,dice,jaccard,hd95,asd");
    std::vector<std::string> names;
    while (std::getline(is, line)) names.push_back(line.substr(0, line.find(',')));
    CHECK(names == std::vector<std::string>{"Baseline", "MT", "CEMT", "UG-CEMT"});
    // toggles follow the component lattice
    CHECK_FALSE(rows[0].ewa);
    CHECK(rows[1].ewa);
    CHECK((rows[2].ewa && rows[2].ca && !rows[2].ugm));
    CHECK((rows[3].ewa && rows[3].ca && rows[3].ugm));
}
