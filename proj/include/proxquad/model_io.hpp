/**
 * @file model_io.hpp
 *
 * Model files: an 8-byte magic, a little-endian uint64 header length, a JSON
 * header (spec, activation, training config, seeds, config hash), then every
 * parameter as a little-endian float64. Layers are stored in order, weights
 * row-major followed by biases; the four standardization vectors come last.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxquad/approach.hpp"
#include "proxquad/config.hpp"
#include "proxquad/nn.hpp"

namespace proxquad {

inline constexpr char kModelMagic[8] = {'P', 'Q', 'M', 'L', 'P', '0', '0', '1'};

struct ModelFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ModelFormatError("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(const std::string& in, std::size_t& pos) { return std::bit_cast<double>(get_u64(in, pos)); }

inline void put_vector(std::string& out, const nn::Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

inline nn::Vector get_vector(const std::string& in, std::size_t& pos, Eigen::Index n) {
  nn::Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = get_f64(in, pos);
  return v;
}

}  // namespace detail

/// Extra header fields (seeds, config hash, role) are caller-supplied.
inline std::string serialize_model(const nn::MLPModel& m, const json& extra = json::object()) {
  json header = extra;
  header["spec"] = {{"input_dim", m.spec.input_dim},
                    {"hidden", m.spec.hidden},
                    {"output_dim", m.spec.output_dim},
                    {"activation", "relu"}};
  header["standardized"] = !m.norm.empty();
  const std::string h = header.dump();

  std::string out(kModelMagic, sizeof kModelMagic);
  detail::put_u64(out, h.size());
  out += h;
  for (const auto& l : m.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put_f64(out, l.weight(r, c));
    detail::put_vector(out, l.bias);
  }
  if (!m.norm.empty()) {
    detail::put_vector(out, m.norm.in_mean);
    detail::put_vector(out, m.norm.in_scale);
    detail::put_vector(out, m.norm.out_mean);
    detail::put_vector(out, m.norm.out_scale);
  }
  return out;
}

struct LoadedModel {
  nn::MLPModel model;
  json header;
};

inline LoadedModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kModelMagic || bytes.compare(0, sizeof kModelMagic, kModelMagic, sizeof kModelMagic) != 0)
    throw ModelFormatError("not a model file");
  std::size_t pos = sizeof kModelMagic;
  const std::uint64_t hlen = detail::get_u64(bytes, pos);
  if (hlen > bytes.size() - pos) throw ModelFormatError("model header truncated");
  LoadedModel out;
  try {
    out.header = json::parse(bytes.substr(pos, hlen));
    const json& s = out.header.at("spec");
    if (s.at("activation") != "relu") throw ModelFormatError("unsupported activation");
    out.model.spec.input_dim = s.at("input_dim").get<int>();
    out.model.spec.hidden = s.at("hidden").get<std::vector<int>>();
    out.model.spec.output_dim = s.at("output_dim").get<int>();
    out.model.spec.validate();
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("bad model header: ") + e.what());
  }
  pos += hlen;

  std::vector<int> widths = out.model.spec.hidden;
  widths.push_back(out.model.spec.output_dim);
  int fan_in = out.model.spec.input_dim;
  for (int fan_out : widths) {
    nn::Layer l{nn::Matrix(fan_out, fan_in), nn::Vector()};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) l.weight(r, c) = detail::get_f64(bytes, pos);
    l.bias = detail::get_vector(bytes, pos, fan_out);
    out.model.layers.push_back(std::move(l));
    fan_in = fan_out;
  }
  if (out.header.value("standardized", false)) {
    auto& n = out.model.norm;
    n.in_mean = detail::get_vector(bytes, pos, out.model.spec.input_dim);
    n.in_scale = detail::get_vector(bytes, pos, out.model.spec.input_dim);
    n.out_mean = detail::get_vector(bytes, pos, out.model.spec.output_dim);
    n.out_scale = detail::get_vector(bytes, pos, out.model.spec.output_dim);
  }
  if (pos != bytes.size()) throw ModelFormatError("trailing bytes in model file");
  for (const auto& l : out.model.layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw ModelFormatError("non-finite parameter");
  return out;
}

inline void write_model(const std::filesystem::path& path, const nn::MLPModel& m, const json& extra = json::object()) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << serialize_model(m, extra);
}

inline LoadedModel read_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_model(ss.str());
}

// ------------------------------------------------------------------
// Trained approaches on disk: <dir>/m1.pqm, m2.pqm, m3.pqm, report.json
// ------------------------------------------------------------------

inline json to_json(const nn::TrainReport& r) {
  return {{"epochs_run", r.epochs_run},
          {"best_epoch", r.best_epoch},
          {"best_validation_loss", r.best_validation_loss},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"lr", r.lr},
          {"config", to_json(r.config)}};
}

inline std::vector<std::string> model_roles(ApproachKind k) {
  switch (k) {
    case ApproachKind::A1: return {"m1"};
    case ApproachKind::A2: return {"m2"};
    case ApproachKind::A3: return {"m1", "m3"};
    case ApproachKind::GroundTruth: return {};
  }
  return {};
}

/// Writes every model of `app` plus a JSON report; returns the files written.
inline std::vector<std::filesystem::path> save_approach(const std::filesystem::path& dir, const TrainedApproach& app,
                                                        int T, std::uint64_t seed, const std::string& cfg_hash) {
  app.check();
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  const auto roles = model_roles(app.kind);
  json reports = json::array();
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const nn::MLPModel& m = roles[i] == "m1" ? *app.m1 : roles[i] == "m2" ? *app.m2 : *app.m3;
    json extra = {{"role", roles[i]},
                  {"approach", to_string(app.kind)},
                  {"T", T},
                  {"seed", seed},
                  {"config_hash", cfg_hash}};
    if (i < app.reports.size()) {
      extra["train_config"] = to_json(app.reports[i].config);
      reports.push_back(to_json(app.reports[i]));
    }
    const auto path = dir / (roles[i] + ".pqm");
    write_model(path, m, extra);
    files.push_back(path);
  }
  const auto report_path = dir / "report.json";
  std::ofstream(report_path, std::ios::binary | std::ios::trunc)
      << json{{"approach", to_string(app.kind)}, {"T", T}, {"seed", seed}, {"config_hash", cfg_hash}, {"reports", reports}}
             .dump(2)
      << '\n';
  files.push_back(report_path);
  return files;
}

inline TrainedApproach load_approach(const std::filesystem::path& dir, ApproachKind kind,
                                     const ControllerParams& params = {}) {
  TrainedApproach app;
  app.kind = kind;
  app.params = params;
  for (const auto& role : model_roles(kind)) {
    auto loaded = read_model(dir / (role + ".pqm"));
    if (role == "m1") app.m1 = std::move(loaded.model);
    if (role == "m2") app.m2 = std::move(loaded.model);
    if (role == "m3") app.m3 = std::move(loaded.model);
  }
  if (app.m1 && (app.m1->spec.input_dim != features_dim() || app.m1->spec.output_dim != kM1OutputDim))
    throw ModelFormatError("m1 has the wrong shape");
  if (app.m2 && (app.m2->spec.input_dim != features_dim() + 2 || app.m2->spec.output_dim != kControlDim))
    throw ModelFormatError("m2 has the wrong shape");
  if (app.m3 && (app.m3->spec.input_dim != kPoseDim + 2 || app.m3->spec.output_dim != kControlDim))
    throw ModelFormatError("m3 has the wrong shape");
  app.check();
  return app;
}

}  // namespace proxquad
