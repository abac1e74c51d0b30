#pragma once

#include "blq/problem.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

namespace blq::testing {

inline std::filesystem::path problem_file(const std::string& name) {
    return std::filesystem::path(BLQ_SOURCE_DIR) / "problems" / name;
}

// Matrix of expression strings as a JSON array of rows. Brace-initialized nested lists of
// string pairs would otherwise be read as JSON objects.
inline nlohmann::json rows(std::initializer_list<std::initializer_list<const char*>> entries) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : entries) {
        nlohmann::json r = nlohmann::json::array();
        for (const char* e : row) r.push_back(e);
        out.push_back(std::move(r));
    }
    return out;
}

// Scalar instance with the given coefficient texts; xi defaults to 1, horizon [0, 1].
inline nlohmann::json scalar_json(const std::string& A, const std::string& B, const std::string& C,
                                  const std::string& Q, const std::string& N, const std::string& R,
                                  const std::string& G, const std::string& xi = "1", double delta = 1.0,
                                  double lambda = 1.0) {
    return {{"n", 1},          {"m", 1},         {"t0", 0},         {"T", 1},
            {"A", {{A}}},      {"B", {{B}}},     {"C", {{C}}},      {"Q", {{Q}}},
            {"N", {{N}}},      {"R", {{R}}},     {"G", {{G}}},      {"xi", {xi}},
            {"delta", delta},  {"lambda", lambda}};
}

inline ProblemInstance scalar_problem(const std::string& A, const std::string& B, const std::string& C,
                                      const std::string& Q, const std::string& N, const std::string& R,
                                      const std::string& G, const std::string& xi = "1", double delta = 1.0,
                                      double lambda = 1.0) {
    return problem_from_json(scalar_json(A, B, C, Q, N, R, G, xi, delta, lambda));
}

// A = C = Q = 0, B = N = R = 1 with terminal weight G; Sigma(s) = 1 - s in closed form.
inline ProblemInstance unit_scalar(const std::string& G = "0", const std::string& xi = "1") {
    return scalar_problem("0", "1", "0", "0", "1", "1", G, xi);
}

} // namespace blq::testing
