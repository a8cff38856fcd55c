#include "memprop/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace memprop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ContractViolation("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

Real parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<Real>(out);
  } catch (const std::logic_error&) {
    throw ContractViolation("config: " + key + " expects a number, got '" + v + "'");
  }
}

std::optional<Real> parse_auto_real(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  const Real out = parse_real(key, v);
  if (!(out > 0)) throw ContractViolation("config: " + key + " must be positive");
  return out;
}

}  // namespace

const char* to_string(PipelineMode mode) noexcept {
  switch (mode) {
    case PipelineMode::mfp:
      return "mfp";
    case PipelineMode::stacking:
      return "stacking";
    case PipelineMode::recurrent:
      return "recurrent";
  }
  return "unknown";
}

PipelineMode parse_mode(const std::string& text) {
  if (text == "mfp") return PipelineMode::mfp;
  if (text == "stacking") return PipelineMode::stacking;
  if (text == "recurrent") return PipelineMode::recurrent;
  throw ContractViolation("unknown mode '" + text + "' (expected mfp, stacking or recurrent)");
}

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "gamma") gamma = parse_count(key, v);
  else if (key == "ne") ne = parse_count(key, v);
  else if (key == "ns") ns = (v == "inf" || v == "off") ? 0 : parse_count(key, v);
  else if (key == "m") m = parse_count(key, v);
  else if (key == "d") d = parse_count(key, v);
  else if (key == "lambda") lambda = parse_count(key, v);
  else if (key == "alpha") alpha = parse_auto_real(key, v);
  else if (key == "beta") beta = parse_auto_real(key, v);
  else if (key == "tau") tau = parse_real(key, v);
  else if (key == "stride") stride = parse_count(key, v);
  else if (key == "channels") channels = parse_count(key, v);
  else if (key == "feature_scale") feature_scale = parse_real(key, v);
  else if (key == "extractor") {
    if (v == "synthetic") extractor = ExtractorSpec::Kind::synthetic;
    else if (v == "file") extractor = ExtractorSpec::Kind::file;
    else throw ContractViolation("config: extractor must be synthetic or file");
  } else if (key == "feature_path") feature_path = v;
  else if (key == "global_feature_path") global_feature_path = v;
  else if (key == "value_mode") {
    if (v == "identity_ab") value_mode = ValueMode::identity_ab;
    else if (v == "extractor") value_mode = ValueMode::extractor;
    else throw ContractViolation("config: value_mode must be identity_ab or extractor");
  } else if (key == "value_channels") value_channels = parse_count(key, v);
  else if (key == "mode") mode = parse_mode(v);
  else if (key == "longterm_cap") longterm_cap = parse_count(key, v);
  else if (key == "seed") seed = parse_count(key, v);
  else if (key == "projections") {
    if (v == "analytic") projections = ProjectionMode::analytic;
    else if (v == "stress") projections = ProjectionMode::stress;
    else throw ContractViolation("config: projections must be analytic or stress");
  } else if (key == "usage_source") {
    if (v == "keys") usage_source = UsageSource::keys;
    else if (v == "readout") usage_source = UsageSource::readout;
    else throw ContractViolation("config: usage_source must be keys or readout");
  } else {
    throw ContractViolation("config: unknown key '" + key + "'");
  }
}

void PipelineConfig::validate() const {
  require(gamma >= 1, "config: gamma must be at least 1");
  require(lambda % 2 == 1, "config: lambda must be odd");
  require(ns == 0 || (ne >= 1 && ne < ns), "config: need 1 <= Ne < Ns");
  require(stride >= 1 && channels >= 1, "config: stride and channels must be positive");
  require(tau > 0 && feature_scale > 0, "config: tau and feature_scale must be positive");
  require(value_mode != ValueMode::extractor || (value_channels >= 2 && value_channels % 2 == 0),
          "config: value_channels must be an even number >= 2");
  require(extractor != ExtractorSpec::Kind::file || !feature_path.empty(),
          "config: the file extractor needs feature_path");
}

std::string PipelineConfig::to_text() const {
  std::ostringstream out;
  out << "gamma=" << gamma << "\nne=" << ne << "\nns=" << ns << "\nm=" << m << "\nd=" << d << "\nlambda=" << lambda
      << "\nalpha=";
  if (alpha) out << *alpha; else out << "auto";
  out << "\nbeta=";
  if (beta) out << *beta; else out << "auto";
  out << "\ntau=" << tau << "\nstride=" << stride << "\nchannels=" << channels << "\nfeature_scale=" << feature_scale
      << "\nextractor=" << (extractor == ExtractorSpec::Kind::file ? "file" : "synthetic");
  if (!feature_path.empty()) out << "\nfeature_path=" << feature_path;
  if (!global_feature_path.empty()) out << "\nglobal_feature_path=" << global_feature_path;
  out << "\nvalue_mode=" << (value_mode == ValueMode::extractor ? "extractor" : "identity_ab")
      << "\nvalue_channels=" << value_channels << "\nmode=" << to_string(mode) << "\nlongterm_cap=" << longterm_cap
      << "\nseed=" << seed << "\nprojections=" << (projections == ProjectionMode::stress ? "stress" : "analytic")
      << "\nusage_source=" << (usage_source == UsageSource::readout ? "readout" : "keys") << '\n';
  return out.str();
}

void apply_override(PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ContractViolation("config: expected key=value, got '" + assignment + "'");
  config.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  PipelineConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(config, line);
    } catch (const ContractViolation& e) {
      throw ContractViolation(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

}  // namespace memprop
