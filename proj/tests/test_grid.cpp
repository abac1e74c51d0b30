#include "blq/errors.hpp"
#include "blq/filtration.hpp"
#include "blq/grid.hpp"
#include "blq/parallel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace {

using namespace blq;

TEST(TimeGrid, SpacingAndEndpoints) {
    const TimeGrid g(0.25, 1.25, 8);
    EXPECT_DOUBLE_EQ(g.dt(), 0.125);
    EXPECT_EQ(g.time(0), 0.25);
    EXPECT_EQ(g.time(8), 1.25);
    for (int k = 0; k < 8; ++k) EXPECT_LT(g.time(k), g.time(k + 1));
    EXPECT_THROW(TimeGrid(0.0, 1.0, 0), ValidationError);
    EXPECT_THROW(TimeGrid(1.0, 1.0, 4), ValidationError);
}

TEST(Paths, StartAtZero) {
    const PathEnsemble e = generate_paths(TimeGrid(0, 1, 1), 3, 42);
    EXPECT_EQ(e.W.rows(), 3);
    EXPECT_EQ(e.W.cols(), 2);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(e.W(i, 0), 0.0);
}

TEST(Paths, TerminalVarianceMatchesHorizon) {
    const PathEnsemble e = generate_paths(TimeGrid(0, 1, 10), 100000, 3);
    const Eigen::VectorXd last = e.W.col(10);
    const double mean = last.mean();
    const double var = (last.array() - mean).square().sum() / (last.size() - 1);
    EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Paths, IncrementMeanShrinksWithPathCount) {
    const PathEnsemble e = generate_paths(TimeGrid(0, 1, 4), 40000, 11);
    for (int k = 0; k < 4; ++k) {
        const double m = (e.W.col(k + 1) - e.W.col(k)).mean();
        EXPECT_LT(std::abs(m), 4.0 * std::sqrt(0.25 / 40000.0));
    }
}

TEST(Paths, SameSeedReproducesBitExactly) {
    const PathEnsemble a = generate_paths(TimeGrid(0, 1, 16), 500, 7);
    const PathEnsemble b = generate_paths(TimeGrid(0, 1, 16), 500, 7);
    EXPECT_TRUE((a.W.array() == b.W.array()).all());
    const PathEnsemble c = generate_paths(TimeGrid(0, 1, 16), 500, 8);
    EXPECT_FALSE((a.W.array() == c.W.array()).all());
}

TEST(Paths, IndependentOfWorkerCount) {
    set_worker_threads(1);
    const PathEnsemble one = generate_paths(TimeGrid(0, 1, 8), 20000, 5);
    set_worker_threads(4);
    const PathEnsemble four = generate_paths(TimeGrid(0, 1, 8), 20000, 5);
    set_worker_threads(0);
    EXPECT_TRUE((one.W.array() == four.W.array()).all());
}

TEST(Paths, PrefixIsStableWhenAddingPaths) {
    const PathEnsemble small = generate_paths(TimeGrid(0, 1, 8), 10, 9);
    const PathEnsemble large = generate_paths(TimeGrid(0, 1, 8), 100, 9);
    EXPECT_TRUE((small.W.array() == large.W.topRows(10).array()).all());
}

TEST(Paths, BudgetIsEnforced) {
    EXPECT_THROW(generate_paths(TimeGrid(0, 1, 99), 1000, 1, 1000 * 99), CapacityError);
    EXPECT_NO_THROW(generate_paths(TimeGrid(0, 1, 99), 1000, 1, 1000 * 100));
    EXPECT_THROW(generate_paths(TimeGrid(0, 1, 4), 0, 1), ValidationError);
}

TEST(Paths, CsvLayout) {
    const PathEnsemble e = generate_paths(TimeGrid(0, 1, 2), 2, 1);
    std::ostringstream out;
    write_paths_csv(out, e);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "path,k,t,W");
    std::getline(in, line);
    EXPECT_EQ(line, "0,0,0,0");
    int rows = 1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2 * 3);
}

class Regression : public ::testing::Test {
protected:
    void SetUp() override {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> n(0.0, 1.0);
        w.resize(10000);
        noise.resize(10000);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w(i) = n(rng);
            noise(i) = 0.1 * n(rng);
        }
    }
    Eigen::VectorXd w, noise;
};

TEST_F(Regression, ConstantIsReproduced) {
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(w.size(), 2.5);
    const RegressionFit fit = regress_conditional(c, w, RegressionBasis{4, true});
    EXPECT_LE((fit.fitted.array() - 2.5).abs().maxCoeff(), 1e-10);
}

TEST_F(Regression, LinearIsExact) {
    const RegressionFit fit = regress_conditional(w, w, RegressionBasis{1, false});
    EXPECT_LE((fit.fitted - w).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(fit.coefficients(1, 0), 1.0, 1e-10);
}

TEST_F(Regression, QuadraticCoefficientIsConsistent) {
    const Eigen::VectorXd y = w.array().square().matrix() + noise;
    const RegressionFit fit = regress_conditional(y, w, RegressionBasis{2, false});
    EXPECT_NEAR(fit.coefficients(2, 0), 1.0, 0.02);
    EXPECT_NEAR(fit.coefficients(0, 0), 0.0, 0.02);
}

TEST_F(Regression, ProjectionIsIdempotent) {
    const Eigen::VectorXd y = (w.array().sin() + noise.array()).matrix();
    const Projector p(w, RegressionBasis{4, true});
    const Eigen::MatrixXd once = p.project(y);
    const Eigen::MatrixXd twice = p.project(once);
    EXPECT_LE((once - twice).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(Regression, RawCoefficientsReproduceFit) {
    const Eigen::VectorXd y = (1.0 + 0.5 * w.array() - 0.25 * w.array().cube()).matrix() + noise;
    const RegressionFit fit = regress_conditional(y, w, RegressionBasis{3, false});
    Eigen::VectorXd rebuilt = Eigen::VectorXd::Zero(w.size());
    for (int j = 0; j <= 3; ++j) rebuilt += fit.coefficients(j, 0) * w.array().pow(j).matrix();
    EXPECT_LE((rebuilt - fit.fitted).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RegressionDesign, TooFewSamplesOrDegenerate) {
    const Eigen::VectorXd few = Eigen::VectorXd::LinSpaced(5, -1, 1);
    EXPECT_THROW(Projector(few, RegressionBasis{4, false}), SingularDesignError);
    Eigen::VectorXd two_values(100);
    for (Eigen::Index i = 0; i < 100; ++i) two_values(i) = i % 2 ? 1.0 : -1.0;
    EXPECT_THROW(Projector(two_values, RegressionBasis{4, false}), SingularDesignError);
}

TEST(RegressionDesign, ConstantSampleKeepsOnlyTheMean) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(50);
    const Projector p(zero, RegressionBasis{4, false});
    EXPECT_EQ(p.active_functions(), 1);
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(50, 0, 49);
    EXPECT_LE((p.project(y).array() - 24.5).abs().maxCoeff(), 1e-12);
}

TEST(LatticeFiltration, ExactConditionalExpectations) {
    const LatticeFiltration f(TimeGrid(0, 1, 6));
    EXPECT_TRUE(f.exact());
    EXPECT_EQ(f.atoms(6), 64);
    // W is a martingale and W^2 - t is a martingale on the tree.
    for (int k = 0; k < 6; ++k) {
        Field next = f.w(k + 1);
        EXPECT_LE((f.condexp(k, next) - Field(f.w(k))).cwiseAbs().maxCoeff(), 1e-14);
        Field sq = f.w(k + 1).array().square().matrix();
        Field expect = (f.w(k).array().square() + f.dt()).matrix();
        EXPECT_LE((f.condexp(k, sq) - expect).cwiseAbs().maxCoeff(), 1e-14);
        // Z estimator of W is one.
        const Field z = f.increment_regression(k, next, f.condexp(k, next));
        EXPECT_LE((z.array() - 1.0).abs().maxCoeff(), 1e-12);
    }
}

TEST(LatticeFiltration, AdjointPairsAreTransposes) {
    const LatticeFiltration f(TimeGrid(0, 1, 5));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 5; ++k) {
        Field a = Field::NullaryExpr(f.atoms(k + 1), 2, [&]() { return n(rng); });
        Field b = Field::NullaryExpr(f.atoms(k), 2, [&]() { return n(rng); });
        const double lhs = (f.condexp(k, a).array() * b.array()).sum() / static_cast<double>(f.atoms(k));
        const double rhs = (a.array() * f.condexp_adjoint(k, b).array()).sum() / static_cast<double>(f.atoms(k + 1));
        EXPECT_NEAR(lhs, rhs, 1e-12);
        const double lhs2 = (f.lift(k, b).array() * a.array()).sum() / static_cast<double>(f.atoms(k + 1));
        const double rhs2 = (b.array() * f.lift_adjoint(k, a).array()).sum() / static_cast<double>(f.atoms(k));
        EXPECT_NEAR(lhs2, rhs2, 1e-12);
    }
}

TEST(RegressionFiltration, MartingaleRepresentationOfTerminalValue) {
    auto paths = std::make_shared<const PathEnsemble>(generate_paths(TimeGrid(0, 1, 10), 20000, 1));
    const RegressionFiltration f(paths, RegressionBasis{4, false});
    EXPECT_FALSE(f.exact());
    const Field terminal = f.w(10);
    Field next = terminal;
    for (int k = 9; k >= 0; --k) {
        const Field mean = f.condexp(k, next);
        const Field z = f.increment_regression(k, next, mean);
        EXPECT_NEAR(z.mean(), 1.0, 0.05) << k;
        next = mean;
        const double rms = std::sqrt((next - Field(f.w(k))).squaredNorm() / static_cast<double>(f.atoms(k)));
        EXPECT_LE(rms, 0.02) << k;
    }
}

} // namespace
