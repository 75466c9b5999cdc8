#include "kanc/nn/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "kanc/error.hpp"

namespace kanc::nn {

using Json = nlohmann::ordered_json;

namespace {

Json array_json(const double* d, Eigen::Index rows, Eigen::Index cols) {
  Json values = Json::array();
  for (Eigen::Index e = 0; e < rows * cols; ++e) values.push_back(d[e]);
  return Json{{"shape", {rows, cols}}, {"values", std::move(values)}};
}

void read_array(const Json& params, const std::string& name, double* d, Eigen::Index rows,
                Eigen::Index cols) {
  const auto it = params.find(name);
  if (it == params.end()) throw IoError(fmt::format("checkpoint is missing array '{}'", name));
  const auto& shape = it->at("shape");
  const auto& values = it->at("values");
  if (shape.at(0).get<Eigen::Index>() != rows || shape.at(1).get<Eigen::Index>() != cols ||
      static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw IoError(fmt::format("checkpoint array '{}' has the wrong shape (want {}x{})", name, rows,
                              cols));
  }
  for (Eigen::Index e = 0; e < rows * cols; ++e) d[e] = values[static_cast<std::size_t>(e)].get<double>();
}

// Every stored array, including frozen splines under symbolic edges.
template <typename Net, typename F>
void walk_all(Net& net, F&& f) {
  const NetworkSpec& spec = net.spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    switch (spec.family) {
      case Family::Mlp: {
        auto& layer = net.dense[static_cast<std::size_t>(l)];
        f(fmt::format("mlp.{}.weight", l), layer.weight.data(), layer.weight.rows(), layer.weight.cols());
        f(fmt::format("mlp.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
      case Family::Kan: {
        auto& layer = net.kan[static_cast<std::size_t>(l)];
        for (int j = 0; j < layer.out; ++j) {
          for (int i = 0; i < layer.in; ++i) {
            auto& act = layer.edge(j, i).activation;
            const std::string base = fmt::format("kan.{}.edge.{}.{}", l, j, i);
            f(base + ".coeffs", act.coeffs.data(), act.coeffs.size(), Eigen::Index{1});
            f(base + ".w_b", &act.w_b, Eigen::Index{1}, Eigen::Index{1});
            f(base + ".w_s", &act.w_s, Eigen::Index{1}, Eigen::Index{1});
          }
        }
        f(fmt::format("kan.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
      case Family::Fkan: {
        auto& layer = net.fourier[static_cast<std::size_t>(l)];
        f(fmt::format("fkan.{}.cos", l), layer.cos_coef.data(), layer.cos_coef.rows(), layer.cos_coef.cols());
        f(fmt::format("fkan.{}.sin", l), layer.sin_coef.data(), layer.sin_coef.rows(), layer.sin_coef.cols());
        f(fmt::format("fkan.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
    }
  }
}

}  // namespace

std::string checkpoint_text(const Checkpoint& ckpt) {
  const Network& net = ckpt.network;
  const NetworkSpec& spec = net.spec;
  Json j;
  j["version"] = kCheckpointVersion;
  j["spec"] = {{"kind", family_name(spec.family)},
               {"widths", spec.widths},
               {"grid", spec.grid},
               {"spline_order", spec.spline_order},
               {"conversion", conversion_name(spec.conversion)},
               {"input_scale", spec.input_scale}};
  j["meta"] = {{"seed", ckpt.meta.seed},
               {"epochs", ckpt.meta.epochs},
               {"final_loss", std::isfinite(ckpt.meta.final_loss) ? Json(ckpt.meta.final_loss) : Json(nullptr)},
               {"target", ckpt.meta.target}};
  Json params = Json::object();
  walk_all(net, [&](const std::string& name, const double* d, Eigen::Index r, Eigen::Index c) {
    params[name] = array_json(d, r, c);
  });
  j["params"] = std::move(params);
  Json sym = Json::object();
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    const KanLayer& layer = net.kan[l];
    for (int jj = 0; jj < layer.out; ++jj) {
      for (int i = 0; i < layer.in; ++i) {
        const KanEdge& e = layer.edge(jj, i);
        if (!e.symbolic) continue;
        sym[fmt::format("kan.{}.edge.{}.{}", l, jj, i)] = {
            {"function", e.symbolic->function->name()},
            {"affine", {e.symbolic->affine[0], e.symbolic->affine[1], e.symbolic->affine[2],
                        e.symbolic->affine[3]}}};
      }
    }
  }
  j["symbolic"] = std::move(sym);
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("malformed checkpoint: {}", e.what()));
  }
  try {
    if (j.at("version").get<std::string>() != kCheckpointVersion) {
      throw IoError(fmt::format("unsupported checkpoint version '{}'", j.at("version").get<std::string>()));
    }
    const Json& s = j.at("spec");
    NetworkSpec spec;
    spec.family = parse_family(s.at("kind").get<std::string>());
    spec.widths = s.at("widths").get<std::vector<int>>();
    spec.grid = s.at("grid").get<std::vector<int>>();
    spec.spline_order = s.at("spline_order").get<int>();
    spec.conversion = parse_conversion(s.at("conversion").get<std::string>());
    spec.input_scale = s.at("input_scale").get<double>();
    Checkpoint ckpt{Network::initialize(spec, 0), {}};
    const Json& m = j.at("meta");
    ckpt.meta.seed = m.at("seed").get<std::uint64_t>();
    ckpt.meta.epochs = m.at("epochs").get<int>();
    ckpt.meta.final_loss = m.at("final_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                         : m.at("final_loss").get<double>();
    ckpt.meta.target = m.at("target").get<std::string>();
    const Json& params = j.at("params");
    walk_all(ckpt.network, [&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
      read_array(params, name, d, r, c);
    });
    for (const auto& [name, entry] : j.at("symbolic").items()) {
      int l = 0, jj = 0, i = 0;
      if (std::sscanf(name.c_str(), "kan.%d.edge.%d.%d", &l, &jj, &i) != 3 || l < 0 ||
          l >= static_cast<int>(ckpt.network.kan.size())) {
        throw IoError(fmt::format("bad symbolic edge id '{}'", name));
      }
      KanLayer& layer = ckpt.network.kan[static_cast<std::size_t>(l)];
      if (jj < 0 || jj >= layer.out || i < 0 || i >= layer.in) {
        throw IoError(fmt::format("symbolic edge '{}' out of range", name));
      }
      SymbolicEdge se;
      se.function = &symbolic::find_function(entry.at("function").get<std::string>());
      const auto affine = entry.at("affine").get<std::vector<double>>();
      if (affine.size() != 4) throw IoError(fmt::format("edge '{}' needs 4 affine values", name));
      se.affine = Eigen::Vector4d(affine[0], affine[1], affine[2], affine[3]);
      layer.edge(jj, i).symbolic = se;
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write checkpoint {}", path.string()));
  os << checkpoint_text(ckpt);
  if (!os) throw IoError(fmt::format("failed writing {}", path.string()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace kanc::nn
