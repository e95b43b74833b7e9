#include "dynilm/library_io.hpp"

#include <fstream>

#include "dynilm/error.hpp"

namespace dynilm {

using nlohmann::json;

namespace {

std::optional<double> optional_number(const json& entry, const char* key) {
  if (!entry.contains(key) || entry.at(key).is_null()) return std::nullopt;
  if (!entry.at(key).is_number()) throw ValidationError(std::string(key) + " must be a number or null");
  return entry.at(key).get<double>();
}

std::vector<double> number_array(const json& entry, const char* key) {
  if (!entry.contains(key) || !entry.at(key).is_array()) {
    throw ValidationError(std::string("missing array '") + key + "'");
  }
  std::vector<double> out;
  for (const auto& v : entry.at(key)) {
    if (!v.is_number()) throw ValidationError(std::string("non-numeric entry in '") + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json model_to_json(const DeviceModel& model) {
  const auto n = static_cast<Eigen::Index>(model.order());
  json a = json::array();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) a.push_back(model.a()(r, c));
  }
  json b = json::array();
  json c = json::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    b.push_back(model.b()(i));
    c.push_back(model.c()(i));
  }
  return json{{"name", model.name()},
              {"order", model.order()},
              {"A", std::move(a)},
              {"b", std::move(b)},
              {"c", std::move(c)},
              {"d", model.d()},
              {"instant_off", model.instant_off()},
              {"max_input", optional_to_json(model.max_input())},
              {"max_output", optional_to_json(model.max_output())},
              {"dc_normalized", model.dc_normalized()}};
}

namespace {

DeviceModel parse_model(const json& entry) {
  if (!entry.is_object()) throw ValidationError("library entry must be an object");
  const std::string name = entry.value("name", std::string{});
  if (name.empty()) throw ValidationError("library entry without a name");
  const auto where = [&](const std::string& what) { return ValidationError("model '" + name + "': " + what); };
  if (!entry.contains("order") || !entry.at("order").is_number_integer() || entry.at("order").get<long>() < 1) {
    throw where("order must be a positive integer");
  }
  const auto n = static_cast<Eigen::Index>(entry.at("order").get<long>());
  std::vector<double> a_flat, b_vec, c_vec;
  try {
    a_flat = number_array(entry, "A");
    b_vec = number_array(entry, "b");
    c_vec = number_array(entry, "c");
  } catch (const ValidationError& e) {
    throw where(e.what());
  }
  if (static_cast<Eigen::Index>(a_flat.size()) != n * n || static_cast<Eigen::Index>(b_vec.size()) != n ||
      static_cast<Eigen::Index>(c_vec.size()) != n) {
    throw where("A, b, c sizes do not match order " + std::to_string(n));
  }
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index col = 0; col < n; ++col) a(r, col) = a_flat[static_cast<std::size_t>(r * n + col)];
  }
  Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(b_vec.data(), n);
  Eigen::VectorXd c = Eigen::Map<Eigen::VectorXd>(c_vec.data(), n);
  const double d = entry.contains("d") ? entry.at("d").get<double>() : 0.0;

  DeviceOptions options;
  options.instant_off = entry.value("instant_off", false);
  options.max_input = optional_number(entry, "max_input");
  options.max_output = optional_number(entry, "max_output");
  options.dc_normalized = entry.value("dc_normalized", false);

  DeviceModel model(name, std::move(a), std::move(b), std::move(c), d, options);
  const auto report = is_stable(model);
  if (!report.stable) {
    throw UnstableModelError("model '" + name + "': unstable, spectral radius " +
                                 format_double(report.spectral_radius),
                             report.spectral_radius);
  }
  return model;
}

}  // namespace

DeviceModel model_from_json(const json& entry) {
  try {
    return parse_model(entry);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("library entry: ") + e.what());
  }
}

json library_to_json(const std::vector<DeviceModel>& models) {
  json doc = json::array();
  for (const auto& m : models) doc.push_back(model_to_json(m));
  return doc;
}

std::vector<DeviceModel> library_from_json(const json& doc) {
  if (!doc.is_array()) throw ValidationError("device library must be a JSON array");
  std::vector<DeviceModel> models;
  models.reserve(doc.size());
  for (const auto& entry : doc) models.push_back(model_from_json(entry));
  return models;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DeviceModel> read_library(const std::filesystem::path& path) {
  try {
    return library_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_library(const std::filesystem::path& path, const std::vector<DeviceModel>& models) {
  write_json_file(path, library_to_json(models));
}

}  // namespace dynilm
