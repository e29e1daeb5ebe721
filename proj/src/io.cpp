#include "fedinf/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedinf/attacks.hpp"

namespace fedinf {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_g9(double v) { return fmt("%.9g", v); }
std::string fmt_g17(double v) { return fmt("%.17g", v); }
std::string fmt_hex(double v) { return fmt("%.13a", v); }

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

template <class T>
T expect_value(std::istream& in, const std::string& path, const char* what) {
  T v{};
  if (!(in >> v)) fail(path, std::string("expected ") + what);
  return v;
}

void expect_token(std::istream& in, const std::string& path,
                  const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token)
    fail(path, "expected '" + token + "', got '" + got + "'");
}

double parse_double(const std::string& token, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') fail(path, "bad number: " + token);
  return v;
}

}  // namespace

void write_dataset(const std::string& path,
                   const std::vector<ProbitPanel>& panels,
                   std::uint64_t seed) {
  if (panels.empty())
    throw std::invalid_argument("write_dataset: empty dataset");
  const std::size_t n = panels.front().n(), k = panels.front().k();
  std::ofstream out = open_out(path);
  out << "probit-dataset v1\n"
      << "n " << n << "\n"
      << "k " << k << "\n"
      << "count " << panels.size() << "\n"
      << "seed " << seed << "\n";
  for (const ProbitPanel& p : panels) {
    if (p.n() != n || p.k() != k)
      throw std::invalid_argument("write_dataset: inconsistent panel shapes");
    out << "\npanel " << (p.input_id.empty() ? "-" : p.input_id) << " "
        << p.label << "\n";
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = p.probits.row(i);
      for (std::size_t c = 0; c < k; ++c)
        out << (c ? " " : "") << fmt_g9(row[c]);
      out << "\n";
    }
  }
  if (!out) fail(path, "write failed");
}

DatasetReadResult read_dataset(const std::string& path) {
  std::ifstream in = open_in(path);
  DatasetReadResult res;
  expect_token(in, path, "probit-dataset");
  std::string version;
  in >> version;
  if (version != "v1") fail(path, "unsupported dataset version: " + version);
  expect_token(in, path, "n");
  res.meta.n = expect_value<int>(in, path, "client count");
  expect_token(in, path, "k");
  res.meta.k = expect_value<int>(in, path, "class count");
  expect_token(in, path, "count");
  res.meta.count = expect_value<int>(in, path, "panel count");
  expect_token(in, path, "seed");
  res.meta.seed = expect_value<std::uint64_t>(in, path, "seed");
  if (res.meta.n < 1 || res.meta.k < 1 || res.meta.count < 1)
    fail(path, "bad header dimensions");

  res.panels.reserve(std::size_t(res.meta.count));
  const std::size_t n = std::size_t(res.meta.n), k = std::size_t(res.meta.k);
  for (int t = 0; t < res.meta.count; ++t) {
    expect_token(in, path, "panel");
    ProbitPanel panel;
    std::string id;
    in >> id;
    panel.input_id = (id == "-") ? "" : id;
    panel.label = expect_value<int>(in, path, "label");
    if (panel.label < -1 || panel.label >= res.meta.k)
      fail(path, "label out of range in panel " + id);
    panel.probits = Mat(n, k);
    std::string token;
    for (std::size_t i = 0; i < n; ++i) {
      double* row = panel.probits.row(i);
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        if (!(in >> token)) fail(path, "truncated panel " + id);
        row[c] = parse_double(token, path);
        if (!std::isfinite(row[c]) || row[c] < 0.0 || row[c] > 1.0)
          fail(path, "probit outside [0, 1] in panel " + id);
        sum += row[c];
      }
      if (std::abs(sum - 1.0) > kIngestSumTol) {
        if (sum <= 0.0) fail(path, "non-positive row sum in panel " + id);
        for (std::size_t c = 0; c < k; ++c) row[c] /= sum;
        ++res.renormalized_rows;
      }
    }
    res.panels.push_back(std::move(panel));
  }
  std::string extra;
  if (in >> extra) fail(path, "trailing content after last panel");
  return res;
}

void write_similarity(const std::string& path, const Mat& similarity) {
  validate_similarity(similarity);
  std::ofstream out = open_out(path);
  out << "K=" << similarity.rows << "\n";
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    for (std::size_t j = 0; j < similarity.cols; ++j)
      out << (j ? " " : "") << fmt_g17(similarity.at(i, j));
    out << "\n";
  }
  if (!out) fail(path, "write failed");
}

Mat read_similarity(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string header;
  if (!(in >> header) || header.rfind("K=", 0) != 0)
    fail(path, "expected K=<classes> header");
  const int classes = std::atoi(header.c_str() + 2);
  if (classes < 1) fail(path, "bad class count in header");
  Mat sim(static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
  std::string token;
  for (double& v : sim.a) {
    if (!(in >> token)) fail(path, "truncated similarity grid");
    v = parse_double(token, path);
  }
  if (in >> token) fail(path, "trailing content after grid");
  try {
    validate_similarity(sim);
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return sim;
}

namespace {

void write_block(std::ofstream& out, const char* name, std::size_t rows,
                 std::size_t cols, const std::vector<double>& values) {
  out << "block " << name << " " << rows << " " << cols << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c)
      out << (c ? " " : "") << fmt_hex(values[r * cols + c]);
    out << "\n";
  }
}

}  // namespace

void write_checkpoint(const std::string& path, const DeepSetModel& model,
                      const std::map<std::string, std::string>& meta) {
  std::ofstream out = open_out(path);
  out << "deepset-checkpoint v1\n"
      << "classes " << model.num_classes() << "\n"
      << "pool " << model.pool_dim() << "\n"
      << "hidden " << model.rho.hidden() << "\n";
  for (const auto& [key, value] : meta) {
    if (key.find_first_of(" \t\n") != std::string::npos || key.empty())
      throw std::invalid_argument("checkpoint: bad meta key");
    out << "meta " << key << " " << value << "\n";
  }
  write_block(out, "rho.w1", model.rho.w1.rows, model.rho.w1.cols, model.rho.w1.a);
  write_block(out, "rho.b1", 1, model.rho.b1.size(), model.rho.b1);
  write_block(out, "rho.w2", model.rho.w2.rows, model.rho.w2.cols, model.rho.w2.a);
  write_block(out, "rho.b2", 1, model.rho.b2.size(), model.rho.b2);
  write_block(out, "mu.w1", model.mu.w1.rows, model.mu.w1.cols, model.mu.w1.a);
  write_block(out, "mu.b1", 1, model.mu.b1.size(), model.mu.b1);
  write_block(out, "mu.w2", model.mu.w2.rows, model.mu.w2.cols, model.mu.w2.a);
  write_block(out, "mu.b2", 1, model.mu.b2.size(), model.mu.b2);
  out << "end\n";
  if (!out) fail(path, "write failed");
}

CheckpointReadResult read_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_token(in, path, "deepset-checkpoint");
  std::string version;
  in >> version;
  if (version != "v1") fail(path, "unsupported checkpoint version: " + version);
  expect_token(in, path, "classes");
  const auto k = expect_value<std::size_t>(in, path, "classes");
  expect_token(in, path, "pool");
  const auto pool = expect_value<std::size_t>(in, path, "pool");
  expect_token(in, path, "hidden");
  const auto hidden = expect_value<std::size_t>(in, path, "hidden");
  if (k < 2 || pool < 1 || hidden < 1) fail(path, "bad model dimensions");

  CheckpointReadResult res;
  std::string token;
  while (in >> token && token == "meta") {
    std::string key;
    if (!(in >> key)) fail(path, "meta line without key");
    std::string value;
    std::getline(in, value);
    const auto start = value.find_first_not_of(" \t");
    res.meta[key] = (start == std::string::npos) ? "" : value.substr(start);
  }
  if (token != "block") fail(path, "expected first parameter block");
  // Un-read the consumed "block" token by parsing the remainder manually.
  DeepSetModel& m = res.model;
  m.rho.w1 = Mat(hidden, k);
  m.rho.w2 = Mat(pool, hidden);
  m.mu.w1 = Mat(hidden, pool);
  m.mu.w2 = Mat(k, hidden);
  auto read_rest = [&](const char* name, std::size_t rows, std::size_t cols,
                       std::vector<double>& values, bool consumed) {
    if (!consumed) expect_token(in, path, "block");
    expect_token(in, path, name);
    const auto r = expect_value<std::size_t>(in, path, "rows");
    const auto c = expect_value<std::size_t>(in, path, "cols");
    if (r != rows || c != cols)
      fail(path, std::string("block ") + name + " has unexpected shape");
    values.resize(rows * cols);
    std::string tok;
    for (double& v : values) {
      if (!(in >> tok)) fail(path, std::string("truncated block ") + name);
      v = parse_double(tok, path);
    }
  };
  read_rest("rho.w1", hidden, k, m.rho.w1.a, true);
  read_rest("rho.b1", 1, hidden, m.rho.b1, false);
  read_rest("rho.w2", pool, hidden, m.rho.w2.a, false);
  read_rest("rho.b2", 1, pool, m.rho.b2, false);
  read_rest("mu.w1", hidden, pool, m.mu.w1.a, false);
  read_rest("mu.b1", 1, hidden, m.mu.b1, false);
  read_rest("mu.w2", k, hidden, m.mu.w2.a, false);
  read_rest("mu.b2", 1, k, m.mu.b2, false);
  expect_token(in, path, "end");
  return res;
}

void write_loss_trace(const std::string& path,
                      const std::vector<TraceRow>& trace) {
  std::ofstream out = open_out(path);
  out << "step,clean_loss,adv_loss\n";
  for (const TraceRow& row : trace)
    out << row.step << "," << fmt_g17(row.clean_loss) << ","
        << fmt_g17(row.adv_loss) << "\n";
  if (!out) fail(path, "write failed");
}

}  // namespace fedinf
