#include "gblab/model_io.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace gblab {

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat json_to_mat(const json& j, const char* what) {
  if (!j.is_array()) throw std::runtime_error(std::string(what) + ": not an array");
  int rows = static_cast<int>(j.size());
  int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j.at(i);
    if (static_cast<int>(row.size()) != cols)
      throw std::runtime_error(std::string(what) + ": ragged rows");
    for (int c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

json mats_to_json(const std::vector<Mat>& mats) {
  json out = json::array();
  for (const Mat& m : mats) out.push_back(mat_to_json(m));
  return out;
}

std::vector<Mat> json_to_mats(const json& j, const char* what) {
  std::vector<Mat> out;
  for (const json& m : j) out.push_back(json_to_mat(m, what));
  return out;
}

json prompt_to_json(const PromptSpec& p) {
  json out;
  if (p.kind == PromptSpec::Kind::Token) {
    out["kind"] = "token";
    out["token"] = mat_to_json(p.token);
  } else {
    out["kind"] = "subgraph";
    out["features"] = mat_to_json(p.features);
    json edges = json::array();
    for (auto [a, b] : p.internal_edges) edges.push_back(json::array({a, b}));
    out["edges"] = std::move(edges);
  }
  return out;
}

PromptSpec prompt_from_json(const json& j) {
  PromptSpec p;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "token") {
    p.kind = PromptSpec::Kind::Token;
    p.token = json_to_mat(j.at("token"), "prompt token");
    if (p.token.rows() != 1)
      throw std::runtime_error("prompt token: expected one row");
    p.features = Mat::Zero(0, p.token.cols());
  } else if (kind == "subgraph") {
    p.kind = PromptSpec::Kind::Subgraph;
    p.features = json_to_mat(j.at("features"), "prompt features");
    for (const json& e : j.at("edges")) {
      int a = e.at(0).get<int>(), b = e.at(1).get<int>();
      if (a < 0 || b < 0 || a >= p.features.rows() || b >= p.features.rows() || a == b)
        throw std::runtime_error("prompt edges: bad pair");
      p.internal_edges.emplace_back(a, b);
    }
    p.token = Mat::Zero(1, p.features.cols());
  } else {
    throw std::runtime_error("prompt kind: " + kind);
  }
  return p;
}

// Encoder layer dims input -> ... -> output recovered from weight shapes.
std::vector<int> encoder_dims(const EncoderParams& enc) {
  std::vector<int> dims;
  for (int l = 0; l < enc.layers(); ++l) {
    int in = static_cast<int>(enc.weights[l].rows());
    if (enc.arch == Arch::SAGE) in /= 2;
    dims.push_back(in);
  }
  dims.push_back(enc.out_dim());
  return dims;
}

void check_encoder_shapes(const EncoderParams& enc, const std::vector<int>& dims,
                          const std::string& path) {
  if (static_cast<int>(dims.size()) != enc.layers() + 1)
    throw std::runtime_error(path + ": layer_dims/weights mismatch");
  for (int l = 0; l < enc.layers(); ++l) {
    int in = enc.arch == Arch::SAGE ? 2 * dims[l] : dims[l];
    if (enc.weights[l].rows() != in || enc.weights[l].cols() != dims[l + 1] ||
        enc.biases[l].rows() != 1 || enc.biases[l].cols() != dims[l + 1])
      throw std::runtime_error(path + ": encoder layer " + std::to_string(l) +
                               " has wrong shape");
  }
}

void check_head_shapes(const HeadParams& head, const std::string& path) {
  for (int l = 0; l < head.layers(); ++l) {
    if (head.biases[l].rows() != 1 ||
        head.biases[l].cols() != head.weights[l].cols())
      throw std::runtime_error(path + ": head bias " + std::to_string(l) +
                               " has wrong shape");
    if (l > 0 && head.weights[l - 1].cols() != head.weights[l].rows())
      throw std::runtime_error(path + ": head layers do not chain");
  }
}

json model_to_json(const ModelBundle& m) {
  json out;
  out["version"] = 1;
  out["paradigm_tag"] = m.paradigm;
  out["architecture"] = arch_tag(m.encoder.arch);
  out["layer_dims"] = encoder_dims(m.encoder);
  out["frozen"] = m.encoder.frozen;
  out["seed"] = m.seed;
  out["weights"] = {{"encoder",
                     {{"weights", mats_to_json(m.encoder.weights)},
                      {"biases", mats_to_json(m.encoder.biases)}}},
                    {"head",
                     {{"weights", mats_to_json(m.head.weights)},
                      {"biases", mats_to_json(m.head.biases)}}}};
  if (m.prompt) out["prompt"] = prompt_to_json(*m.prompt);
  return out;
}

ModelBundle model_from_json(const json& j, const std::string& path) {
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error(path + ": unsupported model version");
  ModelBundle m;
  m.paradigm = j.at("paradigm_tag").get<std::string>();
  if (m.paradigm != "gsl" && m.paradigm != "gcl" && m.paradigm != "gpl")
    throw std::runtime_error(path + ": unknown paradigm_tag " + m.paradigm);
  m.encoder.arch = parse_arch_tag(j.at("architecture").get<std::string>());
  m.encoder.frozen = j.at("frozen").get<bool>();
  m.seed = j.at("seed").get<Seed>();
  const json& w = j.at("weights");
  m.encoder.weights = json_to_mats(w.at("encoder").at("weights"), "encoder weights");
  m.encoder.biases = json_to_mats(w.at("encoder").at("biases"), "encoder biases");
  m.head.weights = json_to_mats(w.at("head").at("weights"), "head weights");
  m.head.biases = json_to_mats(w.at("head").at("biases"), "head biases");
  if (m.encoder.weights.size() != m.encoder.biases.size() ||
      m.head.weights.size() != m.head.biases.size())
    throw std::runtime_error(path + ": weight/bias count mismatch");
  if (m.encoder.weights.empty() || m.head.weights.empty())
    throw std::runtime_error(path + ": empty encoder or head");
  check_encoder_shapes(m.encoder, j.at("layer_dims").get<std::vector<int>>(), path);
  check_head_shapes(m.head, path);
  if (j.contains("prompt") && !j.at("prompt").is_null())
    m.prompt = prompt_from_json(j.at("prompt"));
  if (m.paradigm == "gpl" && !m.prompt)
    throw std::runtime_error(path + ": gpl model without prompt");
  return m;
}

json slurp_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void spit_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void save_model(const ModelBundle& model, const std::string& path) {
  spit_json(model_to_json(model), path);
}

ModelBundle load_model(const std::string& path) {
  try {
    return model_from_json(slurp_json(path), path);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_repository(const TriggerRepository& repo, const ModelBundle* surrogate,
                     const std::string& path) {
  json out;
  out["version"] = 1;
  out["y_t"] = repo.target_label;
  out["n"] = repo.trigger_size;
  out["K"] = repo.count();
  out["lambda"] = repo.lambda;
  out["tau_sim"] = repo.tau_sim;
  out["seed"] = repo.seed;
  json triggers = json::array();
  for (const auto& t : repo.triggers) {
    int n = t.size();
    json adj = json::array();
    for (int i = 0; i < n; ++i) {
      json row = json::array();
      for (int j = 0; j < n; ++j) row.push_back(0);
      adj.push_back(std::move(row));
    }
    for (auto [a, b] : t.edges) {
      adj.at(a).at(b) = 1;
      adj.at(b).at(a) = 1;
    }
    triggers.push_back({{"id", t.id},
                        {"adjacency", std::move(adj)},
                        {"features", mat_to_json(t.features)},
                        {"provenance", t.provenance_center}});
  }
  out["triggers"] = std::move(triggers);
  json log = json::array();
  for (const auto& e : repo.log)
    log.push_back({{"epoch", e.epoch},
                   {"L_p", e.l_p},
                   {"L_Trans", e.l_trans},
                   {"L_Ste", e.l_ste},
                   {"L_t", e.l_total}});
  out["log"] = std::move(log);
  if (surrogate) out["surrogate"] = model_to_json(*surrogate);
  spit_json(out, path);
}

RepositoryFile load_repository(const std::string& path) {
  json j = slurp_json(path);
  try {
    if (j.at("version").get<int>() != 1)
      throw std::runtime_error(path + ": unsupported repository version");
    RepositoryFile out;
    TriggerRepository& repo = out.repo;
    repo.target_label = j.at("y_t").get<int>();
    repo.trigger_size = j.at("n").get<int>();
    repo.lambda = j.at("lambda").get<double>();
    repo.tau_sim = j.at("tau_sim").get<double>();
    repo.seed = j.at("seed").get<Seed>();
    for (const json& t : j.at("triggers")) {
      SubgraphTrigger trig;
      trig.id = t.at("id").get<int>();
      trig.features = json_to_mat(t.at("features"), "trigger features");
      trig.provenance_center = t.at("provenance").get<int>();
      const json& adj = t.at("adjacency");
      int n = static_cast<int>(adj.size());
      if (n != trig.features.rows() || n != repo.trigger_size)
        throw std::runtime_error(path + ": trigger size mismatch");
      for (int a = 0; a < n; ++a) {
        if (static_cast<int>(adj.at(a).size()) != n)
          throw std::runtime_error(path + ": adjacency not square");
        for (int b = 0; b < n; ++b) {
          int bit = adj.at(a).at(b).get<int>();
          if (bit != 0 && bit != 1)
            throw std::runtime_error(path + ": adjacency entries must be 0/1");
          if (bit != adj.at(b).at(a).get<int>())
            throw std::runtime_error(path + ": adjacency not symmetric");
          if (a == b && bit != 0)
            throw std::runtime_error(path + ": adjacency has a self-loop");
          if (a < b && bit == 1) trig.edges.emplace_back(a, b);
        }
      }
      trig.cache = Vec();
      repo.triggers.push_back(std::move(trig));
    }
    if (static_cast<int>(repo.triggers.size()) != j.at("K").get<int>())
      throw std::runtime_error(path + ": K does not match trigger count");
    for (const json& e : j.at("log"))
      repo.log.push_back({e.at("epoch").get<int>(), e.at("L_p").get<double>(),
                          e.at("L_Trans").get<double>(), e.at("L_Ste").get<double>(),
                          e.at("L_t").get<double>()});
    if (j.contains("surrogate") && !j.at("surrogate").is_null())
      out.surrogate = model_from_json(j.at("surrogate"), path);
    return out;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace gblab
