#include "sdm/serialize.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace sdm {

namespace {

constexpr std::string_view kSequenceMagic = "sdm-model v1";
constexpr std::string_view kOnlineMagic = "sdm-online v1";

void append_row(std::string& out, std::string_view key, const double* data, Index n) {
  out += key;
  for (Index i = 0; i < n; ++i) out += fmt::format(" {}", data[i]);
  out += '\n';
}

void append_matrix(std::string& out, std::string_view key, const Matrix& m) {
  out += fmt::format("{} {} {}\n", key, m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    const Vector row = m.row(r).transpose();
    append_row(out, "", row.data(), row.size());
  }
}

// Line-oriented reader: every record is "key value...".
class Reader {
 public:
  explicit Reader(std::string_view text) : in_(std::string(text)) {}

  void expect_line(std::string_view want) {
    const std::string got = next_line();
    if (got != want) fail(fmt::format("expected '{}', got '{}'", want, got));
  }

  std::istringstream record(std::string_view key) {
    std::istringstream ss(next_line());
    std::string k;
    ss >> k;
    if (k != key) fail(fmt::format("expected '{}' record, got '{}'", key, k));
    return ss;
  }

  std::string word(std::string_view key) {
    auto ss = record(key);
    std::string v;
    ss >> v;
    return v;
  }

  long long integer(std::string_view key) {
    auto ss = record(key);
    return to_integer(ss);
  }

  double real(std::string_view key) {
    auto ss = record(key);
    return to_real(ss);
  }

  std::vector<double> reals(std::string_view key) {
    auto ss = record(key);
    return rest(ss);
  }

  Matrix matrix(std::string_view key, Index rows, Index cols) {
    auto ss = record(key);
    const long long r = to_integer(ss), c = to_integer(ss);
    if (r != rows || c != cols) {
      fail(fmt::format("'{}' is {}x{}, expected {}x{}", key, r, c, rows, cols));
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      std::istringstream row(next_line());
      const auto vals = rest(row);
      if (static_cast<Index>(vals.size()) != cols) {
        fail(fmt::format("'{}' row {} has {} values, expected {}", key, i, vals.size(), cols));
      }
      for (Index j = 0; j < cols; ++j) m(i, j) = vals[static_cast<std::size_t>(j)];
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::parse, fmt::format("model file line {}: {}", line_, msg));
  }

 private:
  std::string next_line() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  long long to_integer(std::istringstream& ss) {
    long long v;
    if (!(ss >> v)) fail("expected an integer");
    return v;
  }

  double to_real(std::istringstream& ss) {
    std::string tok;
    if (!(ss >> tok)) fail("expected a number");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    // ERANGE on underflow still yields the exact subnormal; only overflow is an error.
    const bool overflow = errno == ERANGE && std::isinf(v);
    if (tok.empty() || end != tok.c_str() + tok.size() || overflow) {
      fail(fmt::format("bad number '{}'", tok));
    }
    return v;
  }

  std::vector<double> rest(std::istringstream& ss) {
    std::vector<double> out;
    ss >> std::ws;
    while (!ss.eof()) {
      out.push_back(to_real(ss));
      ss >> std::ws;
    }
    return out;
  }

  std::istringstream in_;
  std::size_t line_ = 0;
};

Index checked_dim(Reader& r, std::string_view key, long long min) {
  const long long v = r.integer(key);
  if (v < min) r.fail(fmt::format("'{}' must be at least {}", key, min));
  return static_cast<Index>(v);
}

}  // namespace

std::string format_sequence(const DescentSequence& seq, std::string_view problem) {
  seq.validate();
  std::string out;
  out += kSequenceMagic;
  out += '\n';
  out += fmt::format("mode {}\n", to_string(seq.mode));
  out += fmt::format("param_dim {}\n", seq.param_dim());
  out += fmt::format("feature_dim {}\n", seq.feature_dim());
  out += fmt::format("stages {}\n", seq.stage_count());
  out += fmt::format("problem {}\n", problem.empty() ? "-" : problem);
  append_row(out, "report", seq.training_report.data(),
             static_cast<Index>(seq.training_report.size()));
  for (const auto& step : seq.steps) {
    append_matrix(out, "gain", step.gain);
    append_row(out, "bias", step.bias.data(), step.bias.size());
  }
  return out;
}

StoredSequence parse_sequence(std::string_view text) {
  Reader r(text);
  r.expect_line(kSequenceMagic);
  StoredSequence out;
  out.sequence.mode = parse_sequence_mode(r.word("mode"));
  const Index p = checked_dim(r, "param_dim", 1);
  const Index m = checked_dim(r, "feature_dim", 1);
  const Index stages = checked_dim(r, "stages", 1);
  out.problem = r.word("problem");
  if (out.problem == "-") out.problem.clear();
  out.sequence.training_report = r.reals("report");
  for (Index k = 0; k < stages; ++k) {
    DescentStep step;
    step.gain = r.matrix("gain", p, m);
    const auto bias = r.reals("bias");
    if (static_cast<Index>(bias.size()) != p) r.fail("bias length does not match param_dim");
    step.bias = Eigen::Map<const Vector>(bias.data(), p);
    out.sequence.steps.push_back(std::move(step));
  }
  out.sequence.validate();
  return out;
}

std::string format_online(const OnlineState& state) {
  std::string out;
  out += kOnlineMagic;
  out += '\n';
  out += fmt::format("mode {}\n", to_string(state.mode()));
  out += fmt::format("param_dim {}\n", state.param_dim());
  out += fmt::format("feature_dim {}\n", state.feature_dim());
  out += fmt::format("stages {}\n", state.stage_count());
  out += fmt::format("forgetting {}\n", state.config().forgetting);
  out += fmt::format("weight {}\n", state.config().weight);
  out += fmt::format("literal_step3_sign {}\n", state.config().literal_step3_sign ? 1 : 0);
  out += fmt::format("ingested {}\n", state.ingested());
  for (std::size_t k = 0; k < state.stage_count(); ++k) {
    append_matrix(out, "coeffs", state.coefficients()[k]);
    append_matrix(out, "inv_cov", state.inverse_covariances()[k]);
  }
  return out;
}

OnlineState parse_online(std::string_view text) {
  Reader r(text);
  r.expect_line(kOnlineMagic);
  const SequenceMode mode = parse_sequence_mode(r.word("mode"));
  const Index p = checked_dim(r, "param_dim", 1);
  const Index m = checked_dim(r, "feature_dim", 1);
  const Index stages = checked_dim(r, "stages", 1);
  OnlineConfig config;
  config.forgetting = r.real("forgetting");
  config.weight = r.real("weight");
  config.literal_step3_sign = r.integer("literal_step3_sign") != 0;
  const long long ingested = r.integer("ingested");
  if (ingested < 0) r.fail("'ingested' must be non-negative");
  std::vector<Matrix> coeffs, inv_cov;
  for (Index k = 0; k < stages; ++k) {
    coeffs.push_back(r.matrix("coeffs", p, m + 1));
    inv_cov.push_back(r.matrix("inv_cov", m + 1, m + 1));
  }
  return restore_online_state(mode, std::move(coeffs), std::move(inv_cov), config,
                              static_cast<std::size_t>(ingested));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::io, fmt::format("write to '{}' failed", path.string()));
}

void save_sequence(const std::filesystem::path& path, const DescentSequence& seq,
                   std::string_view problem) {
  write_text_file(path, format_sequence(seq, problem));
}

StoredSequence load_sequence(const std::filesystem::path& path) {
  return parse_sequence(read_text_file(path));
}

void save_online(const std::filesystem::path& path, const OnlineState& state) {
  write_text_file(path, format_online(state));
}

OnlineState load_online(const std::filesystem::path& path) {
  return parse_online(read_text_file(path));
}

}  // namespace sdm
