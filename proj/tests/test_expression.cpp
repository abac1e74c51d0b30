#include "blq/errors.hpp"
#include "blq/expression.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <string>

namespace {

using blq::Expression;

TEST(Expression, ConstantEvaluatesEverywhere) {
    const Expression e = Expression::parse("2");
    EXPECT_EQ(e.evaluate(0.0, 0.0), 2.0);
    EXPECT_EQ(e.evaluate(0.7, -3.0), 2.0);
    EXPECT_FALSE(e.depends_on_s());
    EXPECT_FALSE(e.depends_on_w());
}

TEST(Expression, RationalFeatureAtOrigin) {
    const Expression e = Expression::parse("1/(1+w^2)");
    EXPECT_DOUBLE_EQ(e.evaluate(0.3, 0.0), 1.0);
    EXPECT_TRUE(e.depends_on_w());
    EXPECT_FALSE(e.depends_on_s());
}

TEST(Expression, WeightRatioAtOne) {
    EXPECT_DOUBLE_EQ(Expression::parse("(2+w^2)/(1+w^2)").evaluate(0.0, 1.0), 1.5);
}

TEST(Expression, PrecedenceAndAssociativity) {
    EXPECT_DOUBLE_EQ(Expression::parse("1+2*3").evaluate(0, 0), 7.0);
    EXPECT_DOUBLE_EQ(Expression::parse("(1+2)*3").evaluate(0, 0), 9.0);
    EXPECT_DOUBLE_EQ(Expression::parse("8-3-2").evaluate(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(Expression::parse("8/4/2").evaluate(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2^3^2").evaluate(0, 0), 512.0);
    EXPECT_DOUBLE_EQ(Expression::parse("-2^2").evaluate(0, 0), -4.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2^-1").evaluate(0, 0), 0.5);
}

TEST(Expression, VariablesAndNumbers) {
    const Expression e = Expression::parse(" 1.5e-1 * s + w ^ 3 ");
    EXPECT_TRUE(e.depends_on_s());
    EXPECT_TRUE(e.depends_on_w());
    EXPECT_DOUBLE_EQ(e.evaluate(2.0, -2.0), 0.3 - 8.0);
    EXPECT_DOUBLE_EQ(Expression::parse("w^0.5").evaluate(0, 4.0), 2.0);
    EXPECT_DOUBLE_EQ(Expression::parse("w^-2").evaluate(0, 2.0), 0.25);
}

TEST(Expression, RepeatedEvaluationIsBitIdentical) {
    const Expression e = Expression::parse("(0.1 + s*w)/(1 + w^2) - 3*s^2");
    for (double w = -5.0; w <= 5.0; w += 0.37) {
        const double a = e.evaluate(0.42, w);
        const double b = e.evaluate(0.42, w);
        EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
    }
}

TEST(Expression, MalformedInputIsRejected) {
    for (const char* bad : {"", "1+", "(1", "1)", "x", "sw", "1 2", "2**3", "w^", "exp(w)"})
        EXPECT_THROW(Expression::parse(bad), blq::ValidationError) << bad;
}

TEST(Expression, DiagnosticNamesPosition) {
    try {
        Expression::parse("1 + $");
        FAIL() << "expected a parse error";
    } catch (const blq::ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("position"), std::string::npos);
    }
}

TEST(Expression, VanishingDenominatorIsDomainError) {
    const Expression e = Expression::parse("1/w");
    EXPECT_THROW(e.evaluate(0.0, 0.0), blq::DomainError);
    EXPECT_THROW(e.evaluate(0.0, 1e-13), blq::DomainError);
    EXPECT_DOUBLE_EQ(e.evaluate(0.0, 0.5), 2.0);
}

TEST(Expression, DeepNestingIsRejected) {
    std::string deep(200, '(');
    deep += "1";
    deep += std::string(200, ')');
    EXPECT_THROW(Expression::parse(deep), blq::ValidationError);
}

} // namespace
