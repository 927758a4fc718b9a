#include <catch2/catch_amalgamated.hpp>

#include "critstats/kacrice.hpp"
#include "critstats/validate.hpp"

using namespace critstats;

TEST_CASE("critical point density", "[kacrice]") {
    const TaylorCoeffs rwm = taylor_coeffs(make_rwm());
    CHECK(density_per_area(rwm) == Catch::Approx(2.0 / (kSqrt3 * kPi)).margin(1e-14));
    CHECK(expected_count_in_ball(rwm, 2.0) ==
          Catch::Approx(density_per_area(rwm) * kPi * 4.0).epsilon(1e-13));

    const TaylorCoeffs bf = taylor_coeffs(make_bargmann_fock());
    CHECK(density_per_area(bf) == Catch::Approx(0.73510519389572).margin(1e-10));

    // unit back-conversion: normalizing J0 stretched lengths by s = 2, so one
    // unit area in original coordinates holds 1/4 of the normalized count
    const RadialKernel j0n = normalize(make_bessel_j0());
    CHECK(density_in_original_units(density_per_area(rwm), j0n) ==
          Catch::Approx(density_per_area(rwm) / 4.0).epsilon(1e-13));

    CHECK(expected_abs_det_hessian(rwm) == Catch::Approx(8.0 / kSqrt3).margin(1e-13));
}

TEST_CASE("Hessian determinant moment Monte Carlo", "[kacrice]") {
    const MomentEstimate est = mc_abs_det_hessian_moment(1000000, 7);
    CHECK(std::abs(est.value - 4.0 / kSqrt3) <= 3.0 * est.std_error);
    CHECK(est.std_error < 0.01);
}

TEST_CASE("asymptotic constants and the a_F identity", "[kacrice]") {
    const AsymptoticConstants rwm = asymptotic_constants(taylor_coeffs(make_rwm()));
    CHECK(rwm.a_F == Catch::Approx(kSqrt3 / (kPi * kPi) / 36.0).epsilon(1e-12));
    CHECK(rwm.a_F == Catch::Approx(0.00487482).margin(1e-7));

    const AsymptoticConstants bf = asymptotic_constants(taylor_coeffs(make_bargmann_fock()));
    CHECK(bf.a_F == Catch::Approx(2.0 / (kSqrt3 * kPi * kPi)).epsilon(1e-12));
    CHECK(bf.a_F == Catch::Approx(0.11699563).margin(1e-7));

    // a_F vanishes exactly on the Cauchy-Schwarz boundary g4^2 = (5/2) g6
    TaylorCoeffs edge;
    edge.g2 = 1.0;
    edge.g4 = 1.0;
    edge.g6 = 0.4;
    edge.normalized = true;
    CHECK(a_f_identity(edge) == Catch::Approx(0.0).margin(1e-15));

    // A^2 < 0 on the band g6/g4^2 in (2/5, 4/9): quotient route must refuse
    TaylorCoeffs band = edge;
    band.g6 = 0.42;
    CHECK_THROWS_AS(asymptotic_constants(band), ComplexBranch);
    CHECK(a_f_identity(band) == Catch::Approx(kSqrt3 / (kPi * kPi) * 0.2).epsilon(1e-12));

    CHECK_THROWS_AS(a_f_identity(taylor_coeffs(make_bessel_j0())), Error);
}

TEST_CASE("sphere quadrature basics", "[kacrice]") {
    SphereQuadrature quad;
    quad.n_samples = 1u << 17;
    quad.seed = 3;
    const double area = kPi * kPi * kPi;

    const IntegralEstimate one = sphere_integral(quad, [](const std::array<double, 6>&) { return 1.0; });
    CHECK(one.value == Catch::Approx(area).margin(1e-9));
    CHECK(one.std_error <= 1e-12);

    const IntegralEstimate s1 =
        sphere_integral(quad, [](const std::array<double, 6>& s) { return s[0] * s[0]; });
    CHECK(std::abs(s1.value - area / 6.0) <= 3.0 * s1.std_error);

    SECTION("result is independent of thread count") {
        SphereQuadrature q1 = quad, q4 = quad;
        q1.threads = 1;
        q4.threads = 4;
        auto f = [](const std::array<double, 6>& s) { return std::abs(s[1] * s[4]); };
        CHECK(sphere_integral(q1, f).value == sphere_integral(q4, f).value);
    }

    SECTION("randomized QMC agrees") {
        SphereQuadrature qmc = quad;
        qmc.method = SphereQuadrature::Method::RandomizedQMC;
        const IntegralEstimate est =
            sphere_integral(qmc, [](const std::array<double, 6>& s) { return s[2] * s[2]; });
        CHECK(std::abs(est.value - area / 6.0) <= 4.0 * est.std_error + 1e-4);
    }

    SECTION("importance proposals leave the estimate unbiased") {
        CoordinateProposal prop;
        prop.coords[0] = {{0.6, 0.2}, {0.4, 1.0}};
        prop.coords[5] = {{0.5, 0.1}, {0.5, 1.0}};
        const IntegralEstimate est =
            sphere_integral(quad, [](const std::array<double, 6>&) { return 1.0; }, &prop);
        CHECK(std::abs(est.value - area) <= 4.0 * est.std_error);
    }
}

TEST_CASE("k2 limits", "[kacrice]") {
    SphereQuadrature quad;
    quad.n_samples = 1u << 20;
    quad.seed = 11;

    // r -> 0: K2 tends to a_F (unordered normalization)
    const double af_rwm = asymptotic_constants(taylor_coeffs(make_rwm())).a_F;
    const K2Estimate near0 = k2(make_rwm(), 0.01, quad);
    CHECK(std::abs(near0.value - af_rwm) <= 3.0 * near0.std_error + 0.01 * af_rwm);

    // r -> infinity: the ordered intensity 2 k2 tends to density^2
    const double dens = density_per_area(taylor_coeffs(make_bargmann_fock()));
    const K2Estimate far = k2(make_bargmann_fock(), 6.0, quad);
    CHECK(std::abs(2.0 * far.value - dens * dens) <= 3.0 * 2.0 * far.std_error + 0.01 * dens * dens);

    SECTION("under-resolved quadrature is reported") {
        SphereQuadrature tiny = quad;
        tiny.n_samples = 4096;
        tiny.rel_tol = 1e-9;
        CHECK_THROWS_AS(k2(make_bargmann_fock(), 0.3, tiny), QuadratureUnderResolved);
    }
}

TEST_CASE("typed k2 splits the full integral", "[kacrice]") {
    SphereQuadrature quad;
    quad.n_samples = 1u << 19;
    quad.seed = 5;
    const RadialKernel k = make_bargmann_fock();
    const double r = 0.5;
    const K2Estimate full = k2(k, r, quad);
    const CritType types[] = {CritType::Min, CritType::Max, CritType::Saddle};
    double sum = 0.0, var = 0.0;
    for (CritType t1 : types) {
        for (CritType t2 : types) {
            SphereQuadrature q = quad;
            q.seed = CounterRng::derive_key(5, static_cast<std::uint64_t>(t1) * 3 + static_cast<std::uint64_t>(t2));
            const K2Estimate part = typed_k2(k, r, {t1, t2}, q);
            sum += part.value;
            var += part.std_error * part.std_error;
        }
    }
    const double se = std::sqrt(var + full.std_error * full.std_error);
    CHECK(std::abs(sum - full.value) <= 4.0 * se);

    SECTION("type predicates") {
        CHECK(matches_type(-1.0, 1.0, CritType::Min));
        CHECK(matches_type(1.0, 1.0, CritType::Max));
        CHECK(matches_type(0.5, -1.0, CritType::Saddle));
        CHECK(matches_type(1.0, 1.0, CritType::Extremum));
        CHECK_FALSE(matches_type(1.0, -1.0, CritType::Extremum));
        CHECK(parse_crit_type("saddle") == CritType::Saddle);
        CHECK_THROWS_AS(parse_crit_type("ridge"), Error);
    }
}

TEST_CASE("b/c expansion coefficients", "[kacrice]") {
    const TaylorCoeffs rwm = taylor_coeffs(make_rwm());
    CounterRng rng(77);
    for (int i = 0; i < 20; ++i) {
        std::array<double, 6> s = rng.gaussian_vector<6>();
        double norm = 0.0;
        for (double x : s) norm += x * x;
        for (double& x : s) x /= std::sqrt(norm);
        const BCCoefficients bc = bc_coefficients(rwm, s);
        // monochromatic degeneracy: the linear trace coefficient vanishes
        CHECK(std::abs(bc.b11) <= 1e-10);
        CHECK_FALSE(bc.b_sign_convention_used);
    }

    const TaylorCoeffs bf = taylor_coeffs(make_bargmann_fock());
    const std::array<double, 6> e1 = {1, 0, 0, 0, 0, 0};
    CHECK(bc_coefficients(bf, e1).b_sign_convention_used);

    // negative g8 branch
    TaylorCoeffs bad;
    bad.g2 = 1.0;
    bad.g4 = 0.5;
    bad.g6 = 0.2;
    bad.g8 = 0.001;
    bad.normalized = true;
    CHECK_THROWS_AS(bc_coefficients(bad, e1), G8BranchNegative);
}

TEST_CASE("decay exponent fit", "[kacrice]") {
    std::vector<std::array<double, 3>> pts;
    for (double r : {0.05, 0.1, 0.2, 0.3, 0.4})
        pts.push_back({r, 2.5 * std::pow(r, 3.0), 0.0});
    const SlopeFit fit = decay_exponent_fit(pts);
    CHECK(fit.slope == Catch::Approx(3.0).margin(1e-10));

    CHECK_THROWS_AS(decay_exponent_fit({{0.1, 1.0, 0.0}, {0.2, 2.0, 0.0}}), Error);
    pts[2][1] = 0.0;
    CHECK_THROWS_AS(decay_exponent_fit(pts), NonPositiveValue);
}

TEST_CASE("second factorial moment near zero radius", "[kacrice]") {
    SphereQuadrature quad;
    quad.n_samples = 1u << 16;
    quad.seed = 9;
    const double R = 0.05;
    const double af = asymptotic_constants(taylor_coeffs(make_rwm())).a_F;
    const MomentEstimate m = second_factorial_moment(make_rwm(), R, quad);
    const double target = af * kPi * kPi * R * R * R * R;
    CHECK(std::abs(m.value - target) <= 0.1 * target);
}

TEST_CASE("validation suite", "[kacrice]") {
    ValidationOptions opts;
    opts.sphere_samples = 1u << 16;
    const std::vector<CheckResult> results = run_validation(opts);
    REQUIRE(results.size() == 4);
    for (const CheckResult& res : results) {
        INFO(res.name << ": " << res.detail);
        CHECK(res.pass);
    }

    SECTION("only-filter and unknown check") {
        ValidationOptions one = opts;
        one.only = "af";
        CHECK(run_validation(one).size() == 1);
        one.only = "bogus";
        CHECK_THROWS_AS(run_validation(one), Error);
    }

    SECTION("an injected gamma2 fault is caught") {
        ValidationOptions fault = opts;
        fault.gamma2_perturbation = 1e-4;
        bool any_fail = false;
        for (const CheckResult& res : run_validation(fault))
            if (!res.pass) any_fail = true;
        CHECK(any_fail);
    }

    SECTION("diagnostic row is consistent") {
        const DiagnosticRow row = diagnostic_row(make_bargmann_fock(), 0.2);
        CHECK(row.r == 0.2);
        CHECK(row.blocks.r == 0.2);
        const ConditionalCovariance d = conditional_delta(row.blocks);
        for (int i = 0; i < 8; ++i) CHECK(row.a[i] == d.a[i]);
    }
}
