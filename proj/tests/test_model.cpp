#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "oracles/frozen.hpp"
#include "support.hpp"

using namespace cavmag;
using fixtures::rel;

// ---------------------------------------------------------------- dispersion and dampings

TEST(MagnonFrequency, TableOneFieldGivesCavityFrequency)
{
    MagnonMode m = fixtures::magnon();
    m.mu0_h = 283.0;
    EXPECT_NEAR(magnon_frequency(m), oracle::kMagnonFrequencyAt283_GHz, 1e-12);
    EXPECT_NEAR(magnon_frequency(m), 6.181, 1e-3);
    // Brute-force field scan and the analytic inversion agree on the resonant field.
    EXPECT_NEAR(bias_field_for(m, 6.181), oracle::kFieldForNearFcExact_mT, 1e-9);
    EXPECT_NEAR(bias_field_for(m, 6.181), oracle::kFieldForNearFcScan_mT, 1e-4);
}

TEST(MagnonFrequency, ZeroEffectiveFieldIsDomainError)
{
    MagnonMode m{22.4, 0.0, 0.0, 0.0, 0.0, 0.0};
    try {
        (void)magnon_frequency(m);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("mu0_h"), std::string::npos);
    }
}

TEST(MagnonFrequency, UnitSlopeConstruction)
{
    MagnonMode m{22.4, -7.1, 7.1 + 1000.0 / 22.4, 0.0, 0.0, 0.0};
    EXPECT_NEAR(magnon_frequency(m), 1.0, 1e-12);
}

TEST(EffectiveDamping, TableOneValues)
{
    EXPECT_NEAR(effective_damping(17.0, 332.4, 370.0), -1.8, 1e-12);
    EXPECT_NEAR(effective_damping(17.0, 37.0, 37.0), 17.0, 0.0);
    EXPECT_NEAR(effective_damping(0.8, 8.0, 7.0), 1.3, 1e-12);
}

TEST(EffectiveDamping, SymmetricChannelsCancel)
{
    fixtures::Gen gen(1);
    for (int i = 0; i < 200; ++i) {
        const double k = gen.uniform(0.0, 1e3);
        EXPECT_EQ(effective_damping(0.0, k, k), 0.0);
    }
    EXPECT_THROW(effective_damping(std::nan(""), 1.0, 1.0), DomainError);
}

TEST(Validation, NegativeRatesListedTogether)
{
    try {
        validate(CavityMode{6.0, -1.0, -2.0, 3.0});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.violations().size(), 2u);
    }
    EXPECT_THROW(validate(AnomalyParams{2.0, 1.5}), ValidationError);
    EXPECT_THROW(validate(AnomalyParams{0.0, 1.0}), ValidationError);
}

TEST(TotalPhase, Examples)
{
    EXPECT_NEAR(total_phase({2.1, 32.7, 0.0}) / kPi, 2.0 * 2100.0 / 32.7, 1e-12);
    EXPECT_GT(total_phase({2.1, 32.7, 0.0}), 128.0 * kPi);
    EXPECT_DOUBLE_EQ(total_phase({0.0, 32.7, 0.37}), 0.37);
    EXPECT_NEAR(total_phase({0.0327, 32.7, 0.0}), 2.0 * kPi, 1e-12);
    EXPECT_THROW(total_phase({1.0, 0.0, 0.0}), DomainError);
    EXPECT_THROW(total_phase({-1.0, 32.7, 0.0}), DomainError);
}

// ---------------------------------------------------------------- bare cavity

TEST(BareCavity, OnResonanceValues)
{
    const cplx away = bare_cavity_s21(6.203, fixtures::away_cc());
    EXPECT_NEAR(away.real(), oracle::kAwayS21AtFc, 1e-15);
    EXPECT_NEAR(away.real(), 17.0 / 54.0, 1e-15);
    EXPECT_EQ(away.imag(), 0.0);
    EXPECT_NEAR(std::abs(bare_cavity_s21(6.181, fixtures::near_cc())), oracle::kNearS21AtFcMagnitude, 1e-15);

    CavityMode critical{6.0, 10.0, 20.0, 40.0};
    ASSERT_EQ(cavity_damping(critical), 0.0);
    EXPECT_EQ(std::abs(bare_cavity_s21(6.0, critical)), 0.0);
}

TEST(BareCavity, FarOffResonanceIsTransparent)
{
    const auto c = fixtures::near_cc();
    EXPECT_NEAR(std::abs(bare_cavity_s21(6.181 + 1e4, c) - cplx{1.0, 0.0}), 0.0, 1e-4);
    EXPECT_NEAR(std::abs(bare_cavity_s21(6.181 - 1e4, c) - cplx{1.0, 0.0}), 0.0, 1e-4);
}

TEST(BareCavity, AllZeroRatesIsIdentity)
{
    const CavityMode c{6.0, 0.0, 0.0, 0.0};
    EXPECT_EQ(bare_cavity_s21(6.0, c), cplx(1.0, 0.0));
    EXPECT_EQ(bare_cavity_s21(6.1, c), cplx(1.0, 0.0));
}

TEST(BareCavityProperty, Passivity)
{
    fixtures::Gen gen(2);
    for (int i = 0; i < 2000; ++i) {
        const CavityMode c = gen.cavity();
        const double f = c.f_c + gen.uniform(-1.0, 1.0);
        EXPECT_LE(std::abs(bare_cavity_s21(f, c)), 1.0 + 1e-15);
    }
}

TEST(BareCavityProperty, InverseMagnitudeIsLorentzianWithHwhmAbsBeta)
{
    fixtures::Gen gen(3);
    for (int i = 0; i < 200; ++i) {
        const CavityMode c = gen.cavity();
        const double beta = cavity_damping(c);
        const double gamma = cavity_total_damping(c);
        if (std::abs(beta) < 0.1) {
            continue;
        }
        for (double x : {0.0, beta, -2.5 * beta, 10.0}) {
            const double inv = 1.0 / std::norm(bare_cavity_s21(c.f_c + x * 1e-3, c));
            const double lorentz = 1.0 + (gamma * gamma - beta * beta) / (x * x + beta * beta);
            EXPECT_LT(rel(inv, lorentz), 1e-9);
        }
    }
}

// ---------------------------------------------------------------- coupled transmission

TEST(Coupled, DeltaOneKillsAnomalousTerms)
{
    const auto sys = fixtures::system(fixtures::near_cc(), 0.7, 2.0, 1.0);
    const CoupledModel m(sys);
    EXPECT_EQ(m.g0_squared(), cplx(0.0, 0.0));
    const cplx wc = cplx{0.0, -cavity_damping(sys.cavity)};
    const cplx wm = cplx{(magnon_frequency(sys.magnon) - sys.cavity.f_c) * 1e3, -magnon_damping(sys.magnon)};
    for (double x : {-7.0, 0.0, 3.3}) {
        EXPECT_LT(std::abs(m.numerator(x) - (x - wm) * (x - wc)), 1e-9);
    }
}

TEST(Coupled, DecoupledMagnonReducesToBareCavity)
{
    auto sys = fixtures::system(fixtures::near_cc(), 1.1, 1.0, 1.0);
    sys.magnon.kappa_l = 0.0;
    sys.magnon.kappa_r = 0.0;
    for (double x : {-50.0, -3.0, 0.0, 0.4, 12.0}) {
        const double f = sys.cavity.f_c + x * 1e-3;
        EXPECT_LT(std::abs(coupled_s21(f, sys) - bare_cavity_s21(f, sys.cavity)), 1e-12);
    }
    const auto poles = denominator_poles(sys);
    const cplx wc = cavity_complex_frequency(sys.cavity);
    const cplx wm = magnon_complex_frequency(sys.magnon);
    const auto expected = ComplexModePair::ordered(wc - cplx{0.0, sys.cavity.kappa_r}, wm);
    EXPECT_LT(std::abs(poles.plus - expected.plus), 1e-9);
    EXPECT_LT(std::abs(poles.minus - expected.minus), 1e-9);
    const auto zeros = transmission_zeros(sys);
    EXPECT_TRUE(std::abs(zeros.plus - wc) < 1e-9 || std::abs(zeros.minus - wc) < 1e-9);
}

TEST(Coupled, ZeroCouplingAlsoMatchesBareWithPhaseAndAnomaly)
{
    auto sys = fixtures::system(fixtures::away_cc(), 0.3, 2.0, 1.0);
    sys.magnon.kappa_l = 0.0;
    sys.magnon.kappa_r = 0.0;
    const CoupledModel m(sys);
    EXPECT_EQ(m.coupling_k(), 0.0);
    for (double x : {-20.0, 0.0, 20.0}) {
        EXPECT_LT(std::abs(m.s21_detuned(x) - bare_cavity_s21(sys.cavity.f_c + x * 1e-3, sys.cavity)), 1e-12);
    }
}

TEST(Coupled, AnomalousSplittingMatchesOracleMinima)
{
    const CoupledModel m(fixtures::anomalous());
    auto mag = [&](double x) { return std::abs(m.s21_detuned(x)); };
    for (double x0 : {oracle::kAnomalousMinLow_MHz, oracle::kAnomalousMinHigh_MHz}) {
        EXPECT_LT(mag(x0), mag(x0 - 0.01));
        EXPECT_LT(mag(x0), mag(x0 + 0.01));
    }
    EXPECT_NEAR(mag(oracle::kAnomalousMinHigh_MHz), oracle::kAnomalousMinDepth, 1e-12);
    // Conventional theory at the same phase: one dip at f_c.
    const CoupledModel c(fixtures::conventional());
    const double at0 = std::abs(c.s21_detuned(0.0));
    EXPECT_LT(at0, std::abs(c.s21_detuned(-0.05)));
    EXPECT_LT(at0, std::abs(c.s21_detuned(0.05)));
}

TEST(Coupled, UndampedPoleIsSingularityError)
{
    CoupledSystem sys{{6.0, 0.0, 0.0, 0.0}, {22.4, 0.0, 0.0, 0.0, 0.0, 0.0}, {0.0, 32.7, 0.0}, {1.0, 1.0}};
    sys = with_field_detuning(sys, 10.0);
    EXPECT_THROW((void)coupled_s21(6.0, sys), SingularityError);
}

// ---------------------------------------------------------------- drift matrix and modes

TEST(DriftMatrix, Examples)
{
    auto sys = fixtures::system(fixtures::near_cc(), 0.4, 1.0, 1.0);
    auto bare = sys;
    bare.cavity.kappa_l = bare.cavity.kappa_r = 0.0;
    bare.magnon.kappa_l = bare.magnon.kappa_r = 0.0;
    const auto m0 = drift_matrix(bare);
    EXPECT_EQ(m0[0][1], cplx(0.0, 0.0));
    EXPECT_EQ(m0[1][0], cplx(0.0, 0.0));
    EXPECT_NEAR(m0[0][0].imag(), -17.0, 1e-12);
    EXPECT_NEAR(m0[1][1].imag(), -0.8, 1e-12);

    auto sym = sys;
    sym.cavity.kappa_l = sym.cavity.kappa_r = 350.0;
    sym.magnon.kappa_l = sym.magnon.kappa_r = 7.5;
    const auto ms = drift_matrix(sym);
    EXPECT_EQ(ms[0][1], ms[1][0]);

    auto shifted = sys;
    shifted.link.delta_phi += kPi;  // Phi/eta shifts by pi at eta = 1
    const auto a = drift_matrix(sys);
    const auto b = drift_matrix(shifted);
    // Phi is ~415 rad, so the shift is exact only to a few ulps of that.
    EXPECT_LT(std::abs(a[0][1] + b[0][1]), 1e-10);
    EXPECT_LT(std::abs(a[1][0] + b[1][0]), 1e-10);
}

TEST(DriftMatrix, DeltaNeverEntersTheModes)
{
    fixtures::Gen gen(4);
    for (int i = 0; i < 100; ++i) {
        auto s1 = fixtures::system(gen.cavity(), gen.uniform(0.0, 6.3), gen.uniform(0.5, 3.0), gen.uniform(0.0, 1.0));
        auto s2 = s1;
        s2.anomaly.delta = gen.uniform(0.0, 1.0);
        EXPECT_EQ(drift_matrix(s1), drift_matrix(s2));
        const auto z1 = transmission_zeros(s1);
        const auto z2 = transmission_zeros(s2);
        if (std::abs(s1.anomaly.delta - s2.anomaly.delta) > 1e-3 && s1.magnon.kappa_r > 0.1) {
            EXPECT_GT(std::abs(z1.plus - z2.plus) + std::abs(z1.minus - z2.minus), 1e-9);
        }
    }
}

TEST(Poles, MatchOracleAndDriftEigenvalues)
{
    // At delta_phi = pi both roots sit on Re = f_c, so plus/minus is decided by rounding; compare as a set.
    auto same_set = [](const ComplexModePair& p, cplx a, cplx b) {
        const double direct = std::abs(p.plus - a) + std::abs(p.minus - b);
        const double swapped = std::abs(p.plus - b) + std::abs(p.minus - a);
        return std::min(direct, swapped);
    };
    const auto sys = fixtures::anomalous();
    const cplx fc{sys.cavity.f_c * 1e3, 0.0};
    const cplx pole_a = fc + cplx{oracle::kPolePlusRe_MHz, oracle::kPolePlusIm_MHz};
    const cplx pole_b = fc + cplx{oracle::kPoleMinusRe_MHz, oracle::kPoleMinusIm_MHz};
    EXPECT_LT(same_set(denominator_poles(sys), pole_a, pole_b), 1e-9);
    const cplx eig_a = fc + cplx{oracle::kEigPlusRe_MHz, oracle::kEigPlusIm_MHz};
    const cplx eig_b = fc + cplx{oracle::kEigMinusRe_MHz, oracle::kEigMinusIm_MHz};
    EXPECT_LT(same_set(drift_eigenmodes(sys), eig_a, eig_b), 1e-9);
}

// The denominator of the coupled transmission is det(omega - M) of the drift matrix when the
// references carry the half-loaded dampings, so both routes must give the same pair.
TEST(PolesProperty, PolesEqualDriftEigenvalues)
{
    fixtures::Gen gen(5);
    for (int i = 0; i < 300; ++i) {
        CoupledSystem sys{gen.cavity(), gen.magnon_mode(), {gen.uniform(0.0, 3.0), 32.7, gen.uniform(0.0, 6.3)},
                          {gen.uniform(0.5, 3.0), gen.uniform(0.0, 1.0)}};
        const auto p = denominator_poles(sys);
        const auto e = drift_eigenmodes(sys);
        const double scale = std::max(1.0, std::abs(p.plus - p.minus));
        EXPECT_LT(std::abs(p.plus - e.plus), 1e-7 * scale);
        EXPECT_LT(std::abs(p.minus - e.minus), 1e-7 * scale);
    }
}

TEST(Poles, FarDetunedApproachUncoupledRootsPerturbatively)
{
    for (double detuning : {200.0, 400.0, 800.0}) {
        auto sys = fixtures::system(fixtures::away_cc(), 0.9, 1.0, 1.0, detuning);
        const CoupledModel m(sys);
        const cplx a = magnon_complex_frequency(sys.magnon) - cplx{0.0, sys.magnon.kappa_r};
        const cplx b = cavity_complex_frequency(sys.cavity) - cplx{0.0, sys.cavity.kappa_r};
        const cplx k_term = m.coupling_k() * std::polar(1.0, 2.0 * m.phase());
        // (w - a)(w - b) + k = 0  =>  w ~ a - k / (a - b), b + k / (a - b) to first order.
        const cplx pa = a - k_term / (a - b);
        const cplx pb = b + k_term / (a - b);
        const auto roots = denominator_poles(sys);
        const auto pert = ComplexModePair::ordered(pa, pb);
        const double second_order = std::norm(k_term) / std::pow(std::abs(a - b), 3);
        EXPECT_LT(std::abs(roots.plus - pert.plus), 10.0 * second_order + 1e-9);
        EXPECT_LT(std::abs(roots.minus - pert.minus), 10.0 * second_order + 1e-9);
    }
}

TEST(Modes, OrderingRule)
{
    const auto p = ComplexModePair::ordered({1.0, -2.0}, {3.0, -1.0});
    EXPECT_EQ(p.plus, cplx(3.0, -1.0));
    const auto tie = ComplexModePair::ordered({1.0, -5.0}, {1.0, -1.0});
    EXPECT_EQ(tie.plus, cplx(1.0, -1.0));
    const auto d = eigenmodes(Matrix2c{{{cplx{1.0, 0.0}, cplx{1.0, 0.0}}, {cplx{0.0, 0.0}, cplx{1.0, 0.0}}}});
    EXPECT_TRUE(d.degenerate);
    EXPECT_EQ(d.plus, d.minus);
}

// ---------------------------------------------------------------- coupling algebra

TEST(CouplingFromModes, Examples)
{
    const cplx wc{6181.0, -1.8};
    const double g = 2.7;
    const auto sym = coupling_from_modes(ComplexModePair::ordered(wc + g, wc - g), wc, wc);
    EXPECT_NEAR(sym.j(), 2.0 * g, 1e-9);
    EXPECT_NEAR(sym.gamma(), 0.0, 1e-9);

    const cplx wm{6185.0, -1.3};
    const auto none = coupling_from_modes(ComplexModePair::ordered(wc, wm), wc, wm);
    EXPECT_NEAR(none.magnitude(), 0.0, 1e-9);
}

TEST(CouplingFromModesProperty, RandomMatricesAgainstEigenSolver)
{
    fixtures::Gen gen(6);
    for (int i = 0; i < 500; ++i) {
        const cplx wc = cplx{6000.0, 0.0} + gen.complex(20.0);
        const cplx wm = cplx{6000.0, 0.0} + gen.complex(20.0);
        const cplx g1 = gen.complex(5.0);
        const cplx g2 = gen.complex(5.0);
        Eigen::Matrix2cd m;
        m << wc, g1, g2, wm;
        Eigen::ComplexEigenSolver<Eigen::Matrix2cd> solver(m);
        const auto pair = ComplexModePair::ordered(solver.eigenvalues()[0], solver.eigenvalues()[1]);
        const auto g = coupling_from_modes(pair, wc, wm);
        const cplx expected = 2.0 * std::sqrt(g1 * g2);
        const double tol = 1e-7 * std::max(1.0, std::abs(expected));
        EXPECT_LT(std::min(std::abs(g.g - expected), std::abs(g.g + expected)), tol);
        EXPECT_TRUE(g.j() > 0.0 || (g.j() == 0.0 && g.gamma() >= 0.0));
        // Identity (w+ - w-)^2 = (wc - wm)^2 + 4 g1 g2.
        const cplx split = pair.plus - pair.minus;
        EXPECT_LT(std::abs(split * split - ((wc - wm) * (wc - wm) + 4.0 * g1 * g2)), 1e-6 * std::max(1.0, std::norm(split)));
    }
}

TEST(Cooperativity, Examples)
{
    EXPECT_NEAR(cooperativity({cplx{4.18, 0.0}}, 1.3, -1.8), 7.5, 0.1);
    EXPECT_EQ(cooperativity({cplx{0.0, 0.0}}, 1.3, -1.8), 0.0);
    EXPECT_THROW((void)cooperativity({cplx{4.18, 0.0}}, 1.3, 0.0), SingularityError);
    EXPECT_THROW((void)cooperativity({cplx{4.18, 0.0}}, 0.0, 1.0), SingularityError);
}

TEST(PhasePeriod, DriftCouplingAlternatesRealImaginary)
{
    for (double eta : {1.0, 2.0}) {
        const double quarter = eta == 2.0 ? kPi : kPi / 2.0;
        for (double start : {0.0, 0.3, 1.7}) {
            const auto g0 = coupling_from_drift(fixtures::system(fixtures::near_cc(), start, eta, 1.0));
            const auto g1 = coupling_from_drift(fixtures::system(fixtures::near_cc(), start + quarter, eta, 1.0));
            // A quarter-turn of arg(G^2) = 2 Phi / eta rotates G by pi/2 (up to the branch sign).
            const cplx rotated = g0.g * cplx{0.0, 1.0};
            EXPECT_LT(std::min(std::abs(g1.g - rotated), std::abs(g1.g + rotated)), 1e-9 * g0.magnitude());
            EXPECT_NEAR(g0.magnitude(), g1.magnitude(), 1e-9);
        }
    }
}

TEST(PhasePeriod, EtaTwoIsRealAtPiAndImaginaryAtZero)
{
    const auto at_pi = coupling_from_drift(fixtures::anomalous(kPi));
    EXPECT_NEAR(at_pi.gamma(), 0.0, 1e-9 * at_pi.magnitude());
    const auto at_zero = coupling_from_drift(fixtures::anomalous(0.0));
    EXPECT_NEAR(at_zero.j(), 0.0, 1e-9 * at_zero.magnitude());
}

TEST(ConventionalErasure, NumeratorZerosAreTheBareReferences)
{
    auto sys = fixtures::system(fixtures::near_cc(), 0.77, 1.0, 1.0);
    sys.cavity.kappa_l = sys.cavity.kappa_r = 351.2;
    sys.magnon.kappa_l = sys.magnon.kappa_r = 7.5;
    const auto z = transmission_zeros(sys);
    const cplx wc = cavity_complex_frequency(sys.cavity);
    const cplx wm = magnon_complex_frequency(sys.magnon);
    const auto expected = ComplexModePair::ordered(wc, wm);
    EXPECT_LT(std::abs(z.plus - expected.plus), 1e-9);
    EXPECT_LT(std::abs(z.minus - expected.minus), 1e-9);
}

// ---------------------------------------------------------------- group delay

namespace {

// Closed-form delay of the bare cavity in the instrument phase convention, ns.
double analytic_tau_ns(double x_mhz, const CavityMode& c)
{
    const double b = cavity_damping(c);
    const double g = cavity_total_damping(c);
    return 1e3 / (2.0 * kPi) * (-b / (x_mhz * x_mhz + b * b) + g / (x_mhz * x_mhz + g * g));
}

Spectrum bare_spectrum(const CavityMode& c, double half_span, std::size_t n)
{
    return synthesize_spectrum(c, fixtures::grid(c.f_c, half_span, n), 0.0, 0);
}

} // namespace

TEST(GroupDelay, MatchesFrozenOracle)
{
    struct Case
    {
        CavityMode c;
        double offset;
        double tau;
    };
    const Case cases[] = {{fixtures::near_cc(), 0.0, oracle::kTauNearOffset0_ns},
                          {fixtures::near_cc(), 1.0, oracle::kTauNearOffset1_ns},
                          {fixtures::near_cc(), 5.0, oracle::kTauNearOffset5_ns},
                          {fixtures::near_cc(), 20.0, oracle::kTauNearOffset20_ns},
                          {fixtures::away_cc(), 0.0, oracle::kTauAwayOffset0_ns},
                          {fixtures::away_cc(), 5.0, oracle::kTauAwayOffset5_ns},
                          {fixtures::away_cc(), 20.0, oracle::kTauAwayOffset20_ns}};
    for (const auto& k : cases) {
        // Grid 100x finer than the narrowest feature, with the probe on a node.
        const double h = std::abs(cavity_damping(k.c)) / 100.0;
        std::vector<double> f;
        for (int i = -50; i <= 50; ++i) {
            f.push_back(k.c.f_c + (k.offset + i * h) * 1e-3);
        }
        const auto gd = group_delay(synthesize_spectrum(k.c, f, 0.0, 0));
        EXPECT_LT(rel(gd.tau_ns[50], k.tau), 1e-6) << "offset " << k.offset;
        EXPECT_LT(rel(analytic_tau_ns(k.offset, k.c), k.tau), 1e-12);
    }
}

TEST(GroupDelay, SignIsMinusSignOfBeta)
{
    for (double beta : {-17.0, -1.8, -0.1, 0.1, 1.8, 17.0}) {
        const CavityMode c{6.2, 17.0, 100.0, 100.0 - 2.0 * (beta - 17.0)};
        ASSERT_NEAR(cavity_damping(c), beta, 1e-12);
        const auto gd = group_delay(bare_spectrum(c, std::abs(beta), 201));
        EXPECT_EQ(std::signbit(gd.tau_ns[100]), std::signbit(-beta)) << beta;
    }
}

TEST(GroupDelay, HalvingBetaDoublesDelay)
{
    CavityMode c{6.2, 17.0, 40.0, 80.0};  // beta = -3
    CavityMode half{6.2, 17.0, 40.0, 77.0};  // beta = -1.5
    const double t1 = group_delay(bare_spectrum(c, 3.0, 301)).tau_ns[150];
    const double t2 = group_delay(bare_spectrum(half, 1.5, 301)).tau_ns[150];
    EXPECT_NEAR(t2 / t1, 2.0, 0.05);  // the 1/Gamma background keeps it just under 2
    EXPECT_LT(rel(t2, analytic_tau_ns(0.0, half)), 1e-6);
}

TEST(GroupDelay, ConstantSpectrumHasZeroDelay)
{
    Spectrum s;
    s.freq = fixtures::grid(6.0, 10.0, 51);
    s.s21.assign(51, cplx{0.3, -0.4});
    const auto gd = group_delay(s);
    for (double t : gd.tau_ns) {
        EXPECT_NEAR(t, 0.0, 1e-9);
    }
}

TEST(GroupDelay, ZeroSampleIsFlaggedNotFatal)
{
    const CavityMode critical{6.0, 10.0, 20.0, 40.0};
    const auto s = bare_spectrum(critical, 10.0, 101);  // sample 50 sits exactly on the zero
    ASSERT_EQ(std::abs(s.s21[50]), 0.0);
    const auto gd = group_delay(s);
    EXPECT_EQ(gd.valid[50], 0);
    EXPECT_TRUE(std::isnan(gd.tau_ns[50]));
    EXPECT_GT(gd.invalid_count(), 0u);
    EXPECT_LT(gd.invalid_count(), 10u);
    EXPECT_EQ(gd.valid[0], 1);
}

TEST(GroupDelay, PreconditionsAndUndersamplingWarning)
{
    Spectrum tiny;
    tiny.freq = {6.0, 6.1};
    tiny.s21 = {1.0, 1.0};
    EXPECT_THROW(group_delay(tiny), DomainError);
    const auto coarse = group_delay(bare_spectrum(fixtures::near_cc(), 400.0, 41));
    EXPECT_TRUE(coarse.undersampled);
    const auto fine = group_delay(bare_spectrum(fixtures::near_cc(), 20.0, 2001));
    EXPECT_FALSE(fine.undersampled);
}

TEST(GroupDelayProperty, CriticalCouplingSingularity)
{
    // |tau(f_c)| grows monotonically as |beta| shrinks over a decade and flips sign through zero.
    double last = 0.0;
    for (double beta : {2.0, 1.0, 0.5, 0.4, 0.2}) {
        const CavityMode c{6.2, 17.0, 100.0, 100.0 + 2.0 * (17.0 - beta)};
        const double t = group_delay(bare_spectrum(c, beta, 201)).tau_ns[100];
        EXPECT_LT(t, 0.0);
        EXPECT_GT(std::abs(t), last);
        last = std::abs(t);
        const CavityMode over{6.2, 17.0, 100.0, 100.0 + 2.0 * (17.0 + beta)};
        EXPECT_GT(group_delay(bare_spectrum(over, beta, 201)).tau_ns[100], 0.0);
    }
}

TEST(GroupDelayProperty, RandomCavitiesMatchClosedForm)
{
    fixtures::Gen gen(7);
    for (int i = 0; i < 100; ++i) {
        const CavityMode c = gen.cavity();
        const double beta = cavity_damping(c);
        if (std::abs(beta) < 0.5) {
            continue;
        }
        const double h = std::abs(beta) / 100.0;
        const double x0 = gen.uniform(-3.0, 3.0) * std::abs(beta);
        std::vector<double> f;
        for (int k = -3; k <= 3; ++k) {
            f.push_back(c.f_c + (x0 + k * h) * 1e-3);
        }
        const auto gd = group_delay(synthesize_spectrum(c, f, 0.0, 0));
        const double expected = analytic_tau_ns(x0, c);
        EXPECT_LT(std::abs(gd.tau_ns[3] - expected), 1e-6 * std::abs(expected) + 1e-9);
    }
}

// ---------------------------------------------------------------- extrema

TEST(Extrema, ProminenceAndPlateaus)
{
    const std::vector<double> y{5, 4, 1, 4, 5, 4.5, 4.8, 5, 2, 2, 2, 5};
    const auto m = find_minima(y, 1.0);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].index, 2u);
    EXPECT_GE(m[1].index, 8u);
    EXPECT_LE(m[1].index, 10u);
    const auto both = find_minima(y, 0.1);
    EXPECT_EQ(both.size(), 3u);
}
