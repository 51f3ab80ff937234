#pragma once

#include <ldb/bounds.hpp>
#include <ldb/distance.hpp>
#include <ldb/evolution.hpp>
#include <ldb/grid.hpp>
#include <ldb/verify.hpp>

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>

namespace ldb::cli {

using json = nlohmann::json;

// Bad user input: exit code 1, nothing written.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses a JSON file; syntax errors carry file:line:column.
json load_json_file(const std::filesystem::path& path, const std::string& what);

// Read access to a JSON object with dotted field names in error messages.
class Section {
public:
    Section(const json* node, std::string where) : node_(node), where_(std::move(where)) {}

    [[nodiscard]] bool has(const char* key) const;
    [[nodiscard]] Section child(const char* key) const;  // empty section when absent
    [[nodiscard]] const json* raw(const char* key) const;
    [[nodiscard]] std::string field(const char* key) const;

    [[nodiscard]] double number(const char* key, std::optional<double> fallback = {}) const;
    [[nodiscard]] int integer(const char* key, std::optional<int> fallback = {}) const;
    [[nodiscard]] std::string text(const char* key, std::optional<std::string> fallback = {}) const;
    [[nodiscard]] std::vector<double> numbers(const char* key) const;
    [[nodiscard]] Vector vector(const char* key, std::optional<Vector> fallback = {}) const;
    [[nodiscard]] Matrix matrix(const char* key) const;

    // Rejects keys outside the allowed set.
    void allow_only(std::initializer_list<const char*> keys) const;

    [[nodiscard]] const json* node() const noexcept { return node_; }
    [[nodiscard]] const std::string& where() const noexcept { return where_; }

private:
    const json* node_;
    std::string where_;
};

double to_number(const json& value, const std::string& field);
Matrix to_matrix(const json& value, const std::string& field);

// Numbers, with non-finite values spelled "inf", "-inf" or "nan".
json num(double v);
json to_json(const Vector& v);
json to_json(const Matrix& m);
json to_json(const std::vector<double>& v);
json to_json(const UniversalConstants& c);
json to_json(const ThetaParams& t);
json to_json(const BoundReport& r);
json to_json(const AdmissibilityReport& r);
json to_json(const TimeGrid& g);
json to_json(const KdeEstimate& k);
json to_json(const VerifyResult& v);
json to_json(const RemainderScaling& r);
json to_json(const EvolutionStats& s);
json to_json(const GrowthWindow& g);
json to_json(const BoundInputs& in);
json to_json(const OptimizerConfig& c);
json to_json(const McConfig& c);

}  // namespace ldb::cli
