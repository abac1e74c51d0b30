#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace blq {

// Scalar expression in time s and Brownian value w, compiled to a small stack program.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 's' | 'w' | '(' expr ')'
class Expression {
public:
    // Throws ValidationError with the offending position on malformed input.
    static Expression parse(std::string_view source);
    static Expression constant(double value);

    // Throws DomainError if a denominator has magnitude below 1e-12.
    double evaluate(double s, double w) const;

    bool depends_on_s() const noexcept { return uses_s_; }
    bool depends_on_w() const noexcept { return uses_w_; }
    const std::string& source() const noexcept { return source_; }

private:
    enum class Op : unsigned char { Push, LoadS, LoadW, Add, Sub, Mul, Div, Pow, Neg };
    struct Instr {
        Op op;
        double value;
    };
    friend class ExpressionParser;

    std::vector<Instr> program_;
    std::string source_;
    bool uses_s_ = false;
    bool uses_w_ = false;
    int max_stack_ = 0;
};

} // namespace blq
