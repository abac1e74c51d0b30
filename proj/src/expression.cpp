#include "blq/expression.hpp"

#include "blq/errors.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace blq {

namespace {
constexpr double kMinDenominator = 1e-12;
constexpr int kStackLimit = 64;
} // namespace

class ExpressionParser {
public:
    explicit ExpressionParser(std::string_view text) : text_(text) {}

    Expression run() {
        out_.source_ = std::string(text_);
        parse_expr();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected character");
        if (out_.program_.empty()) fail("empty expression");
        if (max_depth_ > kStackLimit) fail("expression nested too deeply");
        out_.max_stack_ = max_depth_;
        return std::move(out_);
    }

private:
    using Op = Expression::Op;

    [[noreturn]] void fail(const std::string& why) const {
        std::ostringstream msg;
        msg << "expression '" << text_ << "': " << why << " at position " << pos_;
        throw ValidationError(msg.str());
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void emit(Op op, double value = 0.0) {
        out_.program_.push_back({op, value});
        switch (op) {
        case Op::Push:
        case Op::LoadS:
        case Op::LoadW:
            ++depth_;
            break;
        case Op::Neg:
            break;
        default:
            --depth_;
            break;
        }
        if (depth_ > max_depth_) max_depth_ = depth_;
    }

    void parse_expr() {
        parse_term();
        for (;;) {
            if (accept('+')) {
                parse_term();
                emit(Op::Add);
            } else if (accept('-')) {
                parse_term();
                emit(Op::Sub);
            } else {
                return;
            }
        }
    }

    void parse_term() {
        parse_unary();
        for (;;) {
            if (accept('*')) {
                parse_unary();
                emit(Op::Mul);
            } else if (accept('/')) {
                parse_unary();
                emit(Op::Div);
            } else {
                return;
            }
        }
    }

    void parse_unary() {
        if (++nesting_ > kStackLimit) fail("expression nested too deeply");
        if (accept('-')) {
            parse_unary();
            emit(Op::Neg);
        } else if (accept('+')) {
            parse_unary();
        } else {
            parse_power();
        }
        --nesting_;
    }

    void parse_power() {
        parse_primary();
        if (accept('^')) {
            parse_unary();
            emit(Op::Pow);
        }
    }

    void parse_primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            parse_expr();
            if (!accept(')')) fail("expected ')'");
            return;
        }
        if (c == 's' || c == 'w') {
            ++pos_;
            if (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_])))
                fail("unknown identifier");
            if (c == 's') {
                out_.uses_s_ = true;
                emit(Op::LoadS);
            } else {
                out_.uses_w_ = true;
                emit(Op::LoadW);
            }
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double value = 0.0;
            const char* first = text_.data() + pos_;
            const char* last = text_.data() + text_.size();
            auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || ptr == first) fail("malformed number");
            pos_ += static_cast<std::size_t>(ptr - first);
            emit(Op::Push, value);
            return;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int depth_ = 0;
    int max_depth_ = 0;
    int nesting_ = 0;
    Expression out_;
};

Expression Expression::parse(std::string_view source) { return ExpressionParser(source).run(); }

Expression Expression::constant(double value) {
    Expression e;
    e.program_.push_back({Op::Push, value});
    e.max_stack_ = 1;
    std::ostringstream s;
    s.precision(17);
    s << value;
    e.source_ = s.str();
    return e;
}

namespace {

// Small integer exponents by repeated multiplication; std::pow otherwise.
double integer_power(double base, double expo) {
    if (expo == std::trunc(expo) && std::abs(expo) <= 16.0) {
        int e = static_cast<int>(std::abs(expo));
        double result = 1.0, factor = base;
        while (e > 0) {
            if (e & 1) result *= factor;
            factor *= factor;
            e >>= 1;
        }
        return expo < 0.0 ? 1.0 / result : result;
    }
    return std::pow(base, expo);
}

} // namespace

double Expression::evaluate(double s, double w) const {
    std::array<double, kStackLimit + 1> stack;
    int top = 0;
    for (const Instr& in : program_) {
        switch (in.op) {
        case Op::Push:
            stack[top++] = in.value;
            break;
        case Op::LoadS:
            stack[top++] = s;
            break;
        case Op::LoadW:
            stack[top++] = w;
            break;
        case Op::Neg:
            stack[top - 1] = -stack[top - 1];
            break;
        case Op::Add:
            --top;
            stack[top - 1] += stack[top];
            break;
        case Op::Sub:
            --top;
            stack[top - 1] -= stack[top];
            break;
        case Op::Mul:
            --top;
            stack[top - 1] *= stack[top];
            break;
        case Op::Div:
            --top;
            if (std::abs(stack[top]) < kMinDenominator)
                throw DomainError("expression '" + source_ + "': vanishing denominator at s=" +
                                  std::to_string(s) + ", w=" + std::to_string(w));
            stack[top - 1] /= stack[top];
            break;
        case Op::Pow: {
            --top;
            const double base = stack[top - 1];
            const double expo = stack[top];
            if (expo < 0.0 && std::abs(base) < kMinDenominator)
                throw DomainError("expression '" + source_ + "': negative power of zero");
            const double r = integer_power(base, expo);
            if (std::isnan(r)) throw DomainError("expression '" + source_ + "': undefined power");
            stack[top - 1] = r;
            break;
        }
        }
    }
    return stack[0];
}

} // namespace blq
