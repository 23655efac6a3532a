#pragma once

#include "gmddf/gaussian.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>

namespace gmddf {

using Json = nlohmann::json;

/// Malformed input document; the message names the offending field.
class InputError : public Error {
 public:
  using Error::Error;
};

struct LoadedGm {
  GaussianMixture gm;         ///< normalized
  double original_scale = 1;  ///< weight sum as read
};

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

inline Json to_json(const Mat& m) {
  Json a = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline Json gm_to_json(const GaussianMixture& gm) {
  Json comps = Json::array();
  for (const auto& c : gm.components())
    comps.push_back({{"weight", c.weight()}, {"mean", to_json(c.mean())}, {"cov", to_json(c.cov())}});
  return {{"dim", gm.dim()}, {"components", std::move(comps)}};
}

namespace detail {
inline double json_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw InputError(where + ": expected a number");
  return j.get<double>();
}
}  // namespace detail

/// Parses the GM schema; `source` prefixes error messages (usually the file path).
inline LoadedGm gm_from_json(const Json& doc, const std::string& source = "<json>") {
  if (!doc.is_object()) throw InputError(source + ": top level must be an object");
  if (!doc.contains("dim") || !doc["dim"].is_number_integer()) throw InputError(source + ": field 'dim' missing or not an integer");
  const auto d = doc["dim"].get<Index>();
  if (d < 1) throw InputError(source + ": field 'dim' must be >= 1");
  if (!doc.contains("components") || !doc["components"].is_array() || doc["components"].empty())
    throw InputError(source + ": field 'components' missing or empty");
  std::vector<GaussianComponent> comps;
  double total = 0.0;
  const auto& arr = doc["components"];
  for (std::size_t q = 0; q < arr.size(); ++q) {
    const std::string at = source + ": components[" + std::to_string(q) + "]";
    const Json& c = arr[q];
    if (!c.is_object()) throw InputError(at + ": expected an object");
    for (const char* key : {"weight", "mean", "cov"})
      if (!c.contains(key)) throw InputError(at + ": missing field '" + key + "'");
    const double w = detail::json_number(c["weight"], at + ".weight");
    if (!c["mean"].is_array() || static_cast<Index>(c["mean"].size()) != d)
      throw DimensionMismatch(at + ".mean: expected " + std::to_string(d) + " entries");
    Vec mu(d);
    for (Index k = 0; k < d; ++k) mu(k) = detail::json_number(c["mean"][static_cast<std::size_t>(k)], at + ".mean");
    if (!c["cov"].is_array() || static_cast<Index>(c["cov"].size()) != d)
      throw DimensionMismatch(at + ".cov: expected " + std::to_string(d) + " rows");
    Mat cov(d, d);
    for (Index r = 0; r < d; ++r) {
      const Json& row = c["cov"][static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Index>(row.size()) != d)
        throw DimensionMismatch(at + ".cov[" + std::to_string(r) + "]: expected " + std::to_string(d) + " entries");
      for (Index k = 0; k < d; ++k) cov(r, k) = detail::json_number(row[static_cast<std::size_t>(k)], at + ".cov");
    }
    try {
      comps.emplace_back(w, mu, cov);
    } catch (const Error& e) {
      throw InputError(at + ": " + e.what());
    }
    total += w;
  }
  if (!(total > 0.0)) throw InputError(source + ": component weights sum to zero");
  GaussianMixture gm(std::move(comps));
  return {gm.normalized(), total};
}

inline LoadedGm load_gm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(path + ": malformed JSON: " + e.what());
  }
  return gm_from_json(doc, path);
}

/// Fixed formatting so identical inputs give byte-identical files.
inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace gmddf
