#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rarecast/adam.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/train.hpp"

using namespace rarecast;

namespace {

// separable toy data: the label is the sign of the series mean
std::vector<ProcessedStay> separable_stays(Rng& rng, int n, int T, int F) {
    std::vector<ProcessedStay> stays;
    for (int i = 0; i < n; ++i) {
        ProcessedStay s;
        s.stay_id = "s" + std::to_string(i);
        s.T = T;
        s.F = F;
        double mean = 0.0;
        for (int k = 0; k < T * F; ++k) {
            s.x.push_back(rng.normal());
            mean += s.x.back();
        }
        s.context = {rng.normal(), 0.0};
        s.condition = "000";
        s.outcome.task = TaskKind::binary;
        s.outcome.value = mean > 0.0 ? 1 : 0;
        stays.push_back(std::move(s));
    }
    return stays;
}

std::vector<const ProcessedStay*> ptrs(const std::vector<ProcessedStay>& v) {
    std::vector<const ProcessedStay*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

std::vector<ProcessedStay> ar_stays(Rng& rng, int n, int T, int F, double a, double sigma) {
    std::vector<ProcessedStay> stays;
    for (int i = 0; i < n; ++i) {
        ProcessedStay s;
        s.stay_id = "s" + std::to_string(i);
        s.T = T;
        s.F = F;
        std::vector<double> z(std::size_t(F), 0.0);
        for (auto& v : z) v = rng.normal(0.0, a < 1.0 ? sigma / std::sqrt(1 - a * a) : sigma);
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f) {
                if (t > 0) z[std::size_t(f)] = a * z[std::size_t(f)] + rng.normal(0.0, sigma);
                s.x.push_back(z[std::size_t(f)]);
            }
        s.context = {0.0, 0.0};
        s.condition = "000";
        s.outcome.task = TaskKind::binary;
        s.outcome.value = i % 2;
        stays.push_back(std::move(s));
    }
    return stays;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.patience = cfg.max_epochs + 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pretrain on noiseless sequences converges below 1e-3") {
    Rng rng(3);
    // x_{t+1} = 0.5 x_t exactly; perfectly predictable
    auto train_stays = ar_stays(rng, 50, 8, 2, 0.5, 0.0);
    for (auto& s : train_stays) {
        // rebuild noiselessly: start from a random point and decay
        std::vector<double> z = {rng.normal(), rng.normal()};
        s.x.clear();
        for (int t = 0; t < s.T; ++t)
            for (int f = 0; f < 2; ++f) {
                if (t > 0) z[std::size_t(f)] *= 0.5;
                s.x.push_back(z[std::size_t(f)]);
            }
    }
    auto valid_stays = std::vector<ProcessedStay>(train_stays.begin(), train_stays.begin() + 10);

    Rng init(1);
    auto net = Network::make(TaskKind::binary, 2, 2, 2, 2, 16, init);
    TrainConfig cfg;
    cfg.max_epochs = 150;
    cfg.patience = 150;
    cfg.batch_size = 16;
    cfg.base_lr = 8e-3;
    cfg.hidden_dim = 16;
    cfg.seed = 7;
    RunRecord rec;
    pretrain(net, ptrs(train_stays), ptrs(valid_stays), cfg, rec);
    CHECK(rec.rows.back().val_loss < 1e-3);
}

TEST_CASE("pretrain early stopping and schedule bookkeeping") {
    Rng rng(5);
    auto train_stays = ar_stays(rng, 24, 6, 2, 0.7, 0.4);
    auto valid_stays = ar_stays(rng, 12, 6, 2, 0.7, 0.4);

    Rng init(2);
    auto net = Network::make(TaskKind::binary, 2, 2, 2, 2, 8, init);
    TrainConfig cfg;
    cfg.max_epochs = 60;
    cfg.patience = 4;
    cfg.batch_size = 8;
    cfg.base_lr = 5e-3;
    cfg.hidden_dim = 8;
    cfg.seed = 11;
    RunRecord rec;
    pretrain(net, ptrs(train_stays), ptrs(valid_stays), cfg, rec);

    REQUIRE(!rec.rows.empty());
    int last_epoch = rec.rows.back().epoch;
    CHECK(last_epoch - rec.best_pretrain_epoch <= cfg.patience);

    // lr column follows the warmup/decay schedule exactly
    LrSchedule sched{cfg.base_lr};
    for (const auto& row : rec.rows) CHECK(row.lr == sched.lr(row.epoch));

    // the returned parameters reproduce the best recorded validation loss
    double best = rec.rows[0].val_loss;
    for (const auto& row : rec.rows) best = std::min(best, row.val_loss);
    const double val_now = pretrain_loss(net, ptrs(valid_stays), nullptr);
    CHECK(val_now == doctest::Approx(best).epsilon(1e-12));

    // determinism: same seed, same record
    Rng init2(2);
    auto net2 = Network::make(TaskKind::binary, 2, 2, 2, 2, 8, init2);
    RunRecord rec2;
    pretrain(net2, ptrs(train_stays), ptrs(valid_stays), cfg, rec2);
    REQUIRE(rec2.rows.size() == rec.rows.size());
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
        CHECK(rec2.rows[i].train_loss == rec.rows[i].train_loss);
        CHECK(rec2.rows[i].val_loss == rec.rows[i].val_loss);
    }
    CHECK(net2.temporal.w_ih.v == net.temporal.w_ih.v);
}

TEST_CASE("adapt with lambda=0 and a single domain equals plain fine-tuning") {
    Rng rng(13);
    auto train_stays = separable_stays(rng, 40, 4, 3);
    auto valid_stays = separable_stays(rng, 12, 4, 3);

    TrainConfig cfg;
    cfg.max_epochs = 8;
    cfg.patience = 8;
    cfg.batch_size = 8;
    cfg.base_lr = 3e-3;
    cfg.hidden_dim = 8;
    cfg.lambda = 0.0;
    cfg.seed = 17;

    Rng init(4);
    auto net = Network::make(TaskKind::binary, 3, 2, 2, 1, 8, init);
    AdaptPool pool;
    pool.n_domains = 1;
    for (const auto& s : train_stays) {
        pool.stays.push_back(&s);
        pool.domain_ids.push_back(0);
        pool.raw_weights.push_back(1.0);  // single-condition pool: p(v)=1
    }
    RunRecord rec;
    adapt(net, pool, ptrs(valid_stays), cfg, rec);

    // plain supervised loop with the same batch stream, init and optimizer
    Rng init2(4);
    auto plain = Network::make(TaskKind::binary, 3, 2, 2, 1, 8, init2);
    Network grads = plain.zero_clone();
    ParamSet params = plain.adapt_params();
    ParamSet gset = grads.adapt_params();
    AdamState adam;
    adam.init(params.total());
    LrSchedule sched{cfg.base_lr};
    Rng batch_rng = derive_rng(cfg.seed, "adapt-batch");
    std::vector<double> plain_losses;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order(train_stays.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        batch_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            const auto end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            const double B = double(end - start);
            for (auto& [name, t] : gset.items) t->fill(0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& stay = train_stays[order[i]];
                SampleForward fwd;
                forward_sample(plain, stay, fwd);
                batch_loss +=
                    prediction_loss(TaskKind::binary, fwd.logits, stay.outcome, 1.0) / B;
                std::vector<double> dlogits(2, 0.0);
                cross_entropy_grad(fwd.logits, stay.outcome.value, 1.0, 1.0 / B,
                                   dlogits.data());
                std::vector<double> dh(std::size_t(plain.hidden), 0.0);
                plain.classifier.backward(fwd.clf_cache, dlogits.data(), grads.classifier,
                                          dh.data());
                std::vector<double> dh_seq(std::size_t(stay.T) * std::size_t(plain.hidden), 0.0);
                std::copy(dh.begin(), dh.end(),
                          dh_seq.begin() + std::ptrdiff_t((stay.T - 1) * plain.hidden));
                encode_backward(plain, fwd.enc, dh_seq.data(), grads);
            }
            adam_step(adam, params, gset, sched.lr(epoch));
            epoch_loss += batch_loss * B;
        }
        plain_losses.push_back(epoch_loss / double(train_stays.size()));
    }

    REQUIRE(rec.rows.size() >= plain_losses.size());
    for (std::size_t e = 0; e < plain_losses.size(); ++e)
        CHECK(rec.rows[e].pred_loss == doctest::Approx(plain_losses[e]).epsilon(1e-12));
    CHECK(plain.temporal.w_ih.v == net.temporal.w_ih.v);
    CHECK(plain.classifier.l2.W.v == net.classifier.l2.W.v);
}

TEST_CASE("adapt stops within patience of the best epoch and restores it") {
    Rng rng(19);
    auto train_stays = separable_stays(rng, 30, 4, 2);
    auto valid_stays = separable_stays(rng, 16, 4, 2);

    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.patience = 3;
    cfg.batch_size = 8;
    cfg.base_lr = 3e-3;
    cfg.hidden_dim = 8;
    cfg.lambda = 0.0;
    cfg.seed = 23;

    Rng init(5);
    auto net = Network::make(TaskKind::binary, 2, 2, 2, 1, 8, init);
    AdaptPool pool;
    pool.n_domains = 1;
    for (const auto& s : train_stays) {
        pool.stays.push_back(&s);
        pool.domain_ids.push_back(0);
        pool.raw_weights.push_back(1.0);
    }
    RunRecord rec;
    adapt(net, pool, ptrs(valid_stays), cfg, rec);
    CHECK(rec.rows.back().epoch - rec.best_adapt_epoch <= cfg.patience);

    double best = -1.0;
    for (const auto& row : rec.rows)
        if (row.val_auprc) best = std::max(best, *row.val_auprc);
    const EvalResult ev = evaluate(net, ptrs(valid_stays), TaskKind::binary);
    REQUIRE(ev.auprc.has_value());
    CHECK(*ev.auprc == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("evaluate on separable data after plain training") {
    Rng rng(29);
    auto train_stays = separable_stays(rng, 80, 4, 3);

    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.patience = 40;
    cfg.batch_size = 16;
    cfg.base_lr = 5e-3;
    cfg.hidden_dim = 12;
    cfg.lambda = 0.0;
    cfg.seed = 31;

    Rng init(6);
    auto net = Network::make(TaskKind::binary, 3, 2, 2, 1, 12, init);
    AdaptPool pool;
    pool.n_domains = 1;
    for (const auto& s : train_stays) {
        pool.stays.push_back(&s);
        pool.domain_ids.push_back(0);
        pool.raw_weights.push_back(1.0);
    }
    RunRecord rec;
    adapt(net, pool, ptrs(train_stays), cfg, rec);
    const EvalResult ev = evaluate(net, ptrs(train_stays), TaskKind::binary);
    REQUIRE(ev.auroc.has_value());
    CHECK(*ev.auroc > 0.95);
    REQUIRE(ev.auprc.has_value());
    CHECK(*ev.auprc > 0.9);
}

TEST_CASE("evaluate edge cases: ties and single-class sets") {
    Rng init(7);
    auto net = Network::make(TaskKind::binary, 2, 2, 2, 1, 4, init);
    // zero classifier -> identical scores for every stay
    net.classifier.l1.W.fill(0.0);
    net.classifier.l1.b.fill(0.0);
    net.classifier.l2.W.fill(0.0);
    net.classifier.l2.b.fill(0.0);

    Rng rng(31);
    auto stays = separable_stays(rng, 20, 3, 2);
    int pos = 0;
    for (auto& s : stays) pos += s.outcome.value;
    REQUIRE(pos > 0);
    REQUIRE(pos < int(stays.size()));
    const EvalResult tied = evaluate(net, ptrs(stays), TaskKind::binary);
    CHECK(*tied.auroc == doctest::Approx(0.5));

    // single-class test set: metric reported as absent, not zero
    auto negatives = stays;
    for (auto& s : negatives) s.outcome.value = 0;
    const EvalResult undef = evaluate(net, ptrs(negatives), TaskKind::binary);
    CHECK(!undef.auroc.has_value());
    CHECK(!undef.auprc.has_value());
    CHECK(undef.n_test == int(negatives.size()));
}

TEST_CASE("run_seeds aggregates mean and population std") {
    auto runner = [](std::uint64_t seed) {
        std::map<std::string, double> m;
        m["auprc"] = seed == 1 ? 0.6 : 0.8;
        m["auroc"] = 0.7;
        return m;
    };
    const auto stats = run_seeds(runner, {1, 2});
    CHECK(stats.at("auprc").mean == doctest::Approx(0.7));
    CHECK(stats.at("auprc").stddev == doctest::Approx(0.1));
    CHECK(stats.at("auroc").stddev == doctest::Approx(0.0));

    const auto swapped = run_seeds(runner, {2, 1});
    CHECK(swapped.at("auprc").mean == stats.at("auprc").mean);
    CHECK(swapped.at("auprc").stddev == stats.at("auprc").stddev);

    CHECK_THROWS_AS(run_seeds(runner, {1}), ConfigError);
}

TEST_CASE("record csv mirrors the run record") {
    RunRecord rec;
    EpochRow row;
    row.phase = "pretrain";
    row.epoch = 0;
    row.lr = 1e-3;
    row.train_loss = 0.5;
    row.val_loss = 0.4;
    row.wall_ms = 12.5;
    rec.rows.push_back(row);
    row.phase = "adapt";
    row.val_auprc = 0.8;
    row.val_auroc = 0.9;
    rec.rows.push_back(row);
    const auto dir = std::filesystem::temp_directory_path() / "rarecast_rec";
    std::filesystem::create_directories(dir);
    write_record_csv(dir / "record.csv", rec);
    std::ifstream in(dir / "record.csv");
    std::string header, line1, line2;
    std::getline(in, header);
    std::getline(in, line1);
    std::getline(in, line2);
    CHECK(header ==
          "phase,epoch,lr,train_loss,pred_loss,adv_loss,val_loss,val_auprc,val_auroc,wall_ms");
    CHECK(line1.rfind("pretrain,0,", 0) == 0);
    CHECK(line2.rfind("adapt,0,", 0) == 0);
    CHECK(line2.find("0.8") != std::string::npos);
}
