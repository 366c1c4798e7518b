#include "safecbf/dataset_io.hpp"

#include <fstream>
#include <stdexcept>

namespace safecbf {

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json kernel_to_json(const KernelConfig& cfg) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& k : cfg.components) {
    comps.push_back({{"signal_variance", k.signal_variance}, {"length_scales", to_vec(k.length_scales)}});
  }
  return {{"noise_std", cfg.noise_std}, {"components", comps}};
}

KernelConfig kernel_from_json(const nlohmann::json& j) {
  KernelConfig cfg;
  cfg.noise_std = j.at("noise_std").get<double>();
  for (const auto& c : j.at("components")) {
    cfg.components.push_back({c.at("signal_variance").get<double>(), from_vec(c.at("length_scales"))});
  }
  cfg.validate();
  return cfg;
}

nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json xs = nlohmann::json::array();
  nlohmann::json us = nlohmann::json::array();
  for (const auto& x : d.states()) xs.push_back(to_vec(x));
  for (const auto& u : d.inputs()) us.push_back(to_vec(u));
  return {{"kernel", kernel_to_json(d.kernel())}, {"X", xs}, {"U", us}, {"z", d.measurements()}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  auto cfg = kernel_from_json(j.at("kernel"));
  std::vector<VectorXd> xs;
  std::vector<VectorXd> us;
  for (const auto& x : j.at("X")) xs.push_back(from_vec(x));
  for (const auto& u : j.at("U")) us.push_back(from_vec(u));
  const auto zs = j.at("z").get<std::vector<double>>();
  Dataset d(std::move(cfg));
  if (xs.size() != us.size() || xs.size() != zs.size()) {
    throw std::invalid_argument("dataset json: X, U and z must have equal length");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) d.add_measurement(xs[i], us[i], zs[i]);
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  out << dataset_to_json(d).dump(2) << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  return dataset_from_json(nlohmann::json::parse(in));
}

}  // namespace safecbf
