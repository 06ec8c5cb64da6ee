#include "bnbcp/online.hpp"

#include "bnbcp/synthetic.hpp"
#include "bnbcp/vb.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace bnbcp;

TEST_CASE("learning rate values and monotonicity") {
    LearningRateSchedule half{0.0, 0.5};
    CHECK(learning_rate(4, half) == doctest::Approx(0.5).epsilon(1e-15));
    LearningRateSchedule unit{0.0, 1.0};
    CHECK(learning_rate(1, unit) == 1.0);

    double prev = 2.0;
    for (std::int64_t t = 1; t <= 50; ++t) {
        const double g = learning_rate(t, half);
        CHECK(g < prev);
        CHECK(g > 0.0);
        CHECK(g <= 1.0);
        prev = g;
    }

    CHECK_THROWS_AS(learning_rate(0, half), std::invalid_argument);
    CHECK_THROWS_AS(learning_rate(1, LearningRateSchedule{-1.0, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(learning_rate(1, LearningRateSchedule{0.0, 0.3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(learning_rate(1, LearningRateSchedule{0.0, 1.2}),
                    std::invalid_argument);
}

namespace {

struct OnlineFixture {
    SparseCountTensor data;
    Hyperparams<double> hyper;

    OnlineFixture()
        : data(SparseCountTensor::from_entries(
              TensorShape{{3, 2}},
              {{{0, 1}, 4}, {{2, 0}, 3}, {{1, 1}, 5}})),
          hyper(Hyperparams<double>::defaults(2, 2)) {
        hyper.dirichlet_a = {0.3, 0.7};
        hyper.gamma_shape = 1.5;
        hyper.beta_concentration = 1.25;
        hyper.beta_mean = 0.2;
    }
};

} // namespace

TEST_CASE("stats blending matches the reference arithmetic") {
    // Frozen from an independent script evaluating the decayed update with
    // gamma = 0.25 and scale = 7/2 on the fixture below.
    auto css = SufficientStats<double>::zeros(TensorShape{{3, 2}}, 2);
    css.per_mode[0] << 1.0, 0.5, 0.0, 2.0, 3.0, 0.5;
    css.per_mode[1] << 2.5, 1.0, 1.5, 2.0;
    css.total << 4.0, 3.0;
    auto batch = SufficientStats<double>::zeros(TensorShape{{3, 2}}, 2);
    batch.per_mode[0] << 2.0, 0.0, 1.0, 1.0, 0.0, 3.0;
    batch.per_mode[1] << 1.0, 2.0, 2.0, 2.0;
    batch.total << 3.0, 4.0;

    cdf_blend_stats(css, batch, 0.25, 3.5);
    MatrixX<double> want0(3, 2);
    want0 << 2.5, 0.375, 0.875, 2.375, 2.25, 3.0;
    MatrixX<double> want1(2, 2);
    want1 << 2.75, 2.5, 2.875, 3.25;
    VectorX<double> wantt(2);
    wantt << 5.625, 5.75;
    CHECK((css.per_mode[0] - want0).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((css.per_mode[1] - want1).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((css.total - wantt).cwiseAbs().maxCoeff() <= 1e-10);

    // conditional means of the blended statistics, same reference script
    OnlineFixture f;
    ModelState<double> model;
    model.factors = {MatrixX<double>::Zero(3, 2), MatrixX<double>::Zero(2, 2)};
    model.lambda = VectorX<double>::Zero(2);
    model.p = VectorX<double>::Zero(2);
    conditional_mean_model(css, f.hyper, model);

    MatrixX<double> wantu0(3, 2);
    wantu0 << 0.42911877394636017, 0.10150375939849625, 0.18007662835249044,
        0.40225563909774437, 0.39080459770114945, 0.4962406015037594;
    MatrixX<double> wantu1(2, 2);
    wantu1 << 0.49110320284697506, 0.44755244755244755, 0.5088967971530249,
        0.5524475524475524;
    VectorX<double> wantp(2), wantl(2);
    wantp << 0.7014925373134329, 0.7058823529411765;
    wantl << 4.998134328358209, 5.11764705882353;
    CHECK((model.factors[0] - wantu0).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((model.factors[1] - wantu1).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((model.p - wantp).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((model.lambda - wantl).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_NOTHROW(check_model_state(model));
}

TEST_CASE("a zero decay leaves the statistics untouched") {
    auto css = SufficientStats<double>::zeros(TensorShape{{3, 2}}, 2);
    css.per_mode[0].setConstant(1.25);
    css.per_mode[1].setConstant(1.875);
    css.total.setConstant(3.75);
    const auto before = css;
    auto batch = SufficientStats<double>::zeros(TensorShape{{3, 2}}, 2);
    batch.per_mode[0].setConstant(9.0);
    batch.per_mode[1].setConstant(9.0);
    batch.total.setConstant(9.0);
    cdf_blend_stats(css, batch, 0.0, 5.0);
    CHECK(css.per_mode[0] == before.per_mode[0]);
    CHECK(css.total == before.total);
}

TEST_CASE("filtering with full decay and the full batch reduces to batch "
          "statistics") {
    OnlineFixture f;
    auto model = init_model(f.data.shape(), f.hyper, 7);
    const auto reference =
        sample_allocation_stats(f.data, nullptr, model, 123, 1);

    std::vector<std::int64_t> all_ids(static_cast<std::size_t>(f.data.nnz()));
    std::iota(all_ids.begin(), all_ids.end(), 0);
    auto css = SufficientStats<double>::zeros(f.data.shape(), 2);
    css.per_mode[0].setConstant(4.0); // stale values that must vanish
    css.per_mode[1].setConstant(4.0);
    css.total.setConstant(8.0);
    LearningRateSchedule sched{0.0, 1.0}; // gamma_1 = 1
    cdf_step(f.data, all_ids, model, css, 1, sched, f.hyper, 123, 1);

    CHECK((css.per_mode[0] - reference.per_mode[0]).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((css.per_mode[1] - reference.per_mode[1]).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((css.total - reference.total).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("filtering keeps statistics consistent and non-negative") {
    OnlineFixture f;
    auto model = init_model(f.data.shape(), f.hyper, 17);
    auto css = SufficientStats<double>::zeros(f.data.shape(), 2);
    LearningRateSchedule sched{0.0, 0.5};
    Rng seeds(18);
    for (std::int64_t t = 1; t <= 20; ++t) {
        const std::vector<std::int64_t> ids{
            seeds.uniform_int(f.data.nnz()), seeds.uniform_int(f.data.nnz())};
        cdf_step(f.data, ids, model, css, t, sched, f.hyper,
                 seeds.next_u64(), 1);
        CHECK((css.total.array() >= 0.0).all());
        CHECK((css.per_mode[0].array() >= 0.0).all());
        CHECK_NOTHROW(check_stats_consistency(css));
        CHECK_NOTHROW(check_model_state(model));
    }
}

TEST_CASE("svi step matches the reference script") {
    // One step frozen from an independent script: t=3, t0=1, kappa=0.7,
    // minibatch {entry 0, entry 2}, N/B = 3/2.
    OnlineFixture f;
    VariationalState<double> v;
    v.rho = {MatrixX<double>::Zero(3, 2), MatrixX<double>::Zero(2, 2)};
    v.rho[0] << 0.4, 1.9, 2.1, 0.25, 0.33, 0.77;
    v.rho[1] << 1.4, 0.6, 0.5, 2.2;
    v.p_a = (VectorX<double>(2) << 0.9, 1.3).finished();
    v.p_b = (VectorX<double>(2) << 1.7, 0.8).finished();
    v.lambda_a = (VectorX<double>(2) << 2.2, 0.6).finished();
    v.lambda_b = (VectorX<double>(2) << 0.35, 0.6).finished();

    const std::vector<std::int64_t> ids{0, 2};
    const LearningRateSchedule sched{1.0, 0.7};

    SUBCASE("default scale update") {
        svi_step(f.data, ids, v, 3, sched, f.hyper, 1, false);
        MatrixX<double> want0(3, 2);
        want0 << 0.6623923520291782, 3.2670029569694994, 4.186904668666526,
            0.3419378956921719, 0.31863212575117206, 0.5919033034350283;
        MatrixX<double> want1(2, 2);
        want1 << 1.1347496008606803, 0.6378929141627601, 3.6450482181136623,
            3.677887309743052;
        CHECK((v.rho[0] - want0).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((v.rho[1] - want1).cwiseAbs().maxCoeff() <= 1e-10);
        VectorX<double> want_pa(2), want_pb(2), want_la(2), want_lb(2);
        want_pa << 3.7229584477302033, 2.9484054234754713;
        want_pb << 2.00314331330208, 1.4441795407669193;
        want_la << 5.004011990648824, 2.9873172496492906;
        want_lb << 0.46374440889837115, 0.626988588094884;
        CHECK((v.p_a - want_pa).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((v.p_b - want_pb).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((v.lambda_a - want_la).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((v.lambda_b - want_lb).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK_NOTHROW(check_variational_state(v));
    }

    SUBCASE("scale blended from the previous shape parameter") {
        svi_step(f.data, ids, v, 3, sched, f.hyper, 1, true);
        VectorX<double> want_lb(2);
        want_lb << 1.6127254968873121, 0.626988588094884;
        CHECK((v.lambda_b - want_lb).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("svi with full decay and the full batch equals one batch update") {
    OnlineFixture f;
    // Start from a state consistent with some statistics: rho = a + s,
    // p_a = c eps + s_r, lambda_a = g + s_r, so both routes allocate alike.
    auto vstate = init_variational(f.data.shape(), f.hyper, 5);
    auto stats = SufficientStats<double>::zeros(f.data.shape(), 2);
    stats.per_mode[0] << 1.0, 2.0, 3.0, 0.5, 2.0, 2.5;
    stats.per_mode[1] << 4.0, 3.0, 2.0, 2.0;
    stats.total << 6.0, 5.0;
    vb_update_factors(stats, f.hyper, vstate);
    vb_update_p(stats, f.hyper, vstate);
    const VectorX<double> mean_p0 =
        (vstate.p_a.array() / (vstate.p_a.array() + vstate.p_b.array()))
            .matrix();
    vb_update_lambda(stats, mean_p0, f.hyper, vstate);

    // batch route
    auto batch_state = vstate;
    const auto new_stats =
        vb_update_allocations(f.data, batch_state, stats, f.hyper);
    vb_update_factors(new_stats, f.hyper, batch_state);
    vb_update_p(new_stats, f.hyper, batch_state);
    const VectorX<double> mean_p =
        (batch_state.p_a.array() /
         (batch_state.p_a.array() + batch_state.p_b.array()))
            .matrix();
    vb_update_lambda(new_stats, mean_p, f.hyper, batch_state);

    // stochastic route with gamma = 1 and the full data as the minibatch
    auto online_state = vstate;
    std::vector<std::int64_t> all_ids(static_cast<std::size_t>(f.data.nnz()));
    std::iota(all_ids.begin(), all_ids.end(), 0);
    svi_step(f.data, all_ids, online_state, 1, LearningRateSchedule{0.0, 1.0},
             f.hyper, 1, false);

    CHECK((online_state.rho[0] - batch_state.rho[0]).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((online_state.rho[1] - batch_state.rho[1]).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((online_state.p_a - batch_state.p_a).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((online_state.p_b - batch_state.p_b).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((online_state.lambda_a - batch_state.lambda_a)
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((online_state.lambda_b - batch_state.lambda_b)
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
}

TEST_CASE("rows untouched by the minibatch move toward the prior") {
    OnlineFixture f;
    auto vstate = init_variational(f.data.shape(), f.hyper, 5);
    vstate.rho[0].row(2).setConstant(3.0); // far from a = 0.3
    const std::vector<std::int64_t> ids{0}; // entry (0,1): row 2 untouched
    svi_step(f.data, ids, vstate, 1, LearningRateSchedule{1.0, 0.6}, f.hyper);
    for (int r = 0; r < 2; ++r) {
        const double before = 3.0;
        const double after = vstate.rho[0](2, r);
        CHECK(std::abs(after - 0.3) < std::abs(before - 0.3));
        CHECK(after > 0.3);
    }
}

TEST_CASE("run_online validates arguments and produces increasing traces") {
    const TensorShape shape{{7, 6, 5}};
    const auto hyper = Hyperparams<double>::defaults(3, 3);
    const auto data = generate(shape, 3, 2, 40.0, hyper, 61).tensor;
    const auto [train, heldout] = split_heldout(data, 0.15, 62);

    MinibatchPlan plan;
    plan.batch_size = 8;
    plan.seed = 63;
    LearningRateSchedule sched;

    SUBCASE("iters must be positive") {
        OnlineConfig config;
        config.iters = 0;
        CHECK_THROWS_AS(run_online(OnlineEngine::Cdf, train, heldout, plan,
                                   sched, config, hyper),
                        std::invalid_argument);
    }

    SUBCASE("trace bookkeeping and determinism") {
        OnlineConfig config;
        config.iters = 25;
        config.eval_every = 5;
        config.seed = 64;
        for (OnlineEngine engine : {OnlineEngine::Cdf, OnlineEngine::Svi}) {
            const auto [fit, trace] = run_online(engine, train, heldout, plan,
                                                 sched, config, hyper);
            REQUIRE(trace.rows.size() == 5);
            for (std::size_t i = 1; i < trace.rows.size(); ++i) {
                CHECK(trace.rows[i].iteration > trace.rows[i - 1].iteration);
                CHECK(trace.rows[i].elapsed_seconds >
                      trace.rows[i - 1].elapsed_seconds);
            }
            CHECK_NOTHROW(check_model_state(fit.model));

            const auto [fit2, trace2] = run_online(engine, train, heldout,
                                                   plan, sched, config, hyper);
            CHECK(fit.model.lambda == fit2.model.lambda);
            CHECK(fit.model.factors[0] == fit2.model.factors[0]);
        }
    }

    SUBCASE("epoch-shuffled sampling works") {
        MinibatchPlan shuffled = plan;
        shuffled.sampling = MinibatchSampling::EpochShuffled;
        OnlineConfig config;
        config.iters = 10;
        config.eval_every = 10;
        config.seed = 65;
        const auto [fit, trace] = run_online(OnlineEngine::Svi, train,
                                             heldout, shuffled, sched, config,
                                             hyper);
        CHECK_NOTHROW(check_variational_state(fit.vstate));
    }
}
