#include "attnioc/dataset_io.hpp"

#include <json.hpp>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace attnioc {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

struct Dims {
  long n_x = 0;
  long n_u = 0;
  long n_phi = 0;
};

std::vector<std::string> column_names(const Dims& dm, bool with_reward) {
  std::vector<std::string> c{"traj", "seed", "t"};
  for (long i = 0; i < dm.n_x; ++i) c.push_back("x" + std::to_string(i));
  for (long i = 0; i < dm.n_x; ++i) c.push_back("mu" + std::to_string(i));
  c.insert(c.end(), {"d", "x_s", "x_o"});
  for (long i = 0; i < dm.n_u; ++i) c.push_back("u" + std::to_string(i));
  c.insert(c.end(), {"u_o", "u_s", "obs_len"});
  for (long i = 0; i < dm.n_x; ++i) c.push_back("obs" + std::to_string(i));
  for (long i = 0; i < dm.n_phi; ++i) c.push_back("phi" + std::to_string(i));
  if (with_reward) c.push_back("reward");
  return c;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

long parse_int(const std::string& s, size_t line_no) {
  const double v = parse_double(s, line_no);
  if (v != static_cast<double>(static_cast<long>(v)))
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": expected integer, got '" + s + "'");
  return static_cast<long>(v);
}

std::uint64_t parse_seed(const std::string& s, size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE)
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": bad seed '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_dataset(const Dataset& data, const std::string& path) {
  Dims dm;
  if (!data.trajectories.empty() && !data.trajectories[0].steps.empty()) {
    const auto& s0 = data.trajectories[0].steps[0];
    dm = Dims{static_cast<long>(s0.x_p.size()), static_cast<long>(s0.u_p.size()), static_cast<long>(s0.phi.size())};
  }
  const bool with_reward = data.meta.theta.has_value();
  if (with_reward && data.meta.theta->size() != dm.n_phi && dm.n_phi > 0)
    throw DimensionError("write_dataset: theta size does not match feature size");
  const auto cols = column_names(dm, with_reward);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (size_t k = 0; k < data.trajectories.size(); ++k) {
    const auto& tr = data.trajectories[k];
    for (const auto& st : tr.steps) {
      if (st.x_p.size() != dm.n_x || st.mu.size() != dm.n_x || st.u_p.size() != dm.n_u || st.phi.size() != dm.n_phi ||
          st.obs.size() > dm.n_x)
        throw DimensionError("write_dataset: inconsistent record sizes");
      out << k << ',' << tr.seed << ',' << st.t;
      for (long i = 0; i < dm.n_x; ++i) out << ',' << format_double(st.x_p(i));
      for (long i = 0; i < dm.n_x; ++i) out << ',' << format_double(st.mu(i));
      out << ',' << st.d << ',' << st.x_s << ',' << st.x_o;
      for (long i = 0; i < dm.n_u; ++i) out << ',' << format_double(st.u_p(i));
      out << ',' << st.u_o << ',' << st.u_s << ',' << st.obs.size();
      for (long i = 0; i < dm.n_x; ++i) {
        out << ',';
        if (i < st.obs.size()) out << format_double(st.obs(i));
      }
      for (long i = 0; i < dm.n_phi; ++i) out << ',' << format_double(st.phi(i));
      if (with_reward) out << ',' << format_double(data.meta.theta->dot(st.phi));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);

  json meta;
  meta["format_version"] = kFormatVersion;
  meta["scenario"] = data.meta.scenario;
  meta["policy_id"] = data.meta.policy_id;
  meta["base_seed"] = data.meta.base_seed;
  if (with_reward) {
    // Stored as text so the sidecar round-trips exactly as well.
    json th = json::array();
    for (Eigen::Index i = 0; i < data.meta.theta->size(); ++i) th.push_back(format_double((*data.meta.theta)(i)));
    meta["theta"] = th;
  } else {
    meta["theta"] = nullptr;
  }
  meta["num_trajectories"] = data.size();
  meta["horizon"] = data.horizon();
  meta["n_x"] = dm.n_x;
  meta["n_u"] = dm.n_u;
  meta["n_phi"] = dm.n_phi;
  meta["columns"] = cols;
  std::ofstream mo(path + ".meta.json");
  if (!mo) throw std::runtime_error("cannot open " + path + ".meta.json for writing");
  mo << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::string& path) {
  std::ifstream mi(path + ".meta.json");
  if (!mi) throw std::runtime_error("missing metadata sidecar " + path + ".meta.json");
  json meta;
  try {
    mi >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad metadata sidecar: " + std::string(e.what()));
  }
  if (meta.value("format_version", 0) != kFormatVersion) throw std::runtime_error("unsupported dataset format version");
  Dataset data;
  Dims dm{meta.at("n_x").get<long>(), meta.at("n_u").get<long>(), meta.at("n_phi").get<long>()};
  data.meta.scenario = meta.value("scenario", "");
  data.meta.policy_id = meta.value("policy_id", "");
  data.meta.base_seed = meta.value("base_seed", std::uint64_t{0});
  if (!meta.at("theta").is_null()) {
    const auto& th = meta["theta"];
    VectorXd v(static_cast<Eigen::Index>(th.size()));
    for (size_t i = 0; i < th.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_double(th[i].get<std::string>(), 0);
    data.meta.theta = v;
  }
  const bool with_reward = data.meta.theta.has_value();
  const auto cols = column_names(dm, with_reward);

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset " + path + " has no header");
  const auto header = split(line, ',');
  if (header != cols) throw std::runtime_error("dataset header does not match its metadata");
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size())
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                               " fields, got " + std::to_string(f.size()));
    size_t c = 0;
    const long traj = parse_int(f[c++], line_no);
    if (traj < 0 || traj > static_cast<long>(data.trajectories.size()))
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": trajectories out of order");
    if (traj == static_cast<long>(data.trajectories.size())) {
      data.trajectories.emplace_back();
      data.trajectories.back().seed = parse_seed(f[c], line_no);
    }
    ++c;
    StepRecord st;
    st.t = static_cast<int>(parse_int(f[c++], line_no));
    st.x_p.resize(dm.n_x);
    st.mu.resize(dm.n_x);
    for (long i = 0; i < dm.n_x; ++i) st.x_p(i) = parse_double(f[c++], line_no);
    for (long i = 0; i < dm.n_x; ++i) st.mu(i) = parse_double(f[c++], line_no);
    st.d = static_cast<int>(parse_int(f[c++], line_no));
    st.x_s = static_cast<int>(parse_int(f[c++], line_no));
    st.x_o = static_cast<int>(parse_int(f[c++], line_no));
    st.u_p.resize(dm.n_u);
    for (long i = 0; i < dm.n_u; ++i) st.u_p(i) = parse_double(f[c++], line_no);
    st.u_o = static_cast<int>(parse_int(f[c++], line_no));
    st.u_s = static_cast<int>(parse_int(f[c++], line_no));
    const long obs_len = parse_int(f[c++], line_no);
    if (obs_len < 0 || obs_len > dm.n_x) throw std::runtime_error("dataset line " + std::to_string(line_no) + ": bad obs_len");
    st.obs.resize(obs_len);
    for (long i = 0; i < dm.n_x; ++i, ++c)
      if (i < obs_len) st.obs(i) = parse_double(f[c], line_no);
    st.phi.resize(dm.n_phi);
    for (long i = 0; i < dm.n_phi; ++i) st.phi(i) = parse_double(f[c++], line_no);
    auto& steps = data.trajectories[static_cast<size_t>(traj)].steps;
    if (st.t != static_cast<int>(steps.size()))
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": steps out of order");
    steps.push_back(std::move(st));
  }
  const long n = meta.at("num_trajectories").get<long>();
  if (static_cast<long>(data.size()) != n) throw std::runtime_error("dataset trajectory count does not match metadata");
  for (const auto& tr : data.trajectories)
    if (static_cast<int>(tr.steps.size()) != meta.at("horizon").get<int>() + 1)
      throw std::runtime_error("dataset horizon is not homogeneous");
  return data;
}

}  // namespace attnioc
