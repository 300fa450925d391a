#pragma once

// Model files are plain text:
//
//   gestop-model v=1
//   feature-layout v=1
//   kind static|dynamic
//   labels <count>
//   <one label per line>
//   sizes <input> <hidden> <classes>                 (static)
//   sizes <input> <encoder> <gru_hidden> <classes>   (dynamic)
//   tensor <name> <rows> <cols>
//   <rows lines, cols space-separated values each>
//   ...
//   end
//
// Values use the shortest decimal form that round-trips, so save/load is
// bit-exact and saving the same weights always yields the same bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "gestop/error.hpp"
#include "gestop/features.hpp"
#include "gestop/neuralnet.hpp"
#include "gestop/wire.hpp"

namespace gestop::nn {

inline constexpr int kModelFormatVersion = 1;

using AnyModel = std::variant<StaticNet, DynamicNet>;

namespace detail {

inline void write_tensor(std::string& out, std::string_view name, const Matrix& m) {
  out += "tensor ";
  out += name;
  out += ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      gestop::detail::append_double(out, m(i, j));
    }
    out += '\n';
  }
}

inline void write_tensor(std::string& out, std::string_view name, const Vector& v) {
  write_tensor(out, name, Matrix(v));
}

inline void write_header(std::string& out, std::string_view kind,
                         const std::vector<std::string>& labels) {
  out += "gestop-model v=" + std::to_string(kModelFormatVersion) + '\n';
  out += "feature-layout v=" + std::to_string(kFeatureLayoutVersion) + '\n';
  out += "kind ";
  out += kind;
  out += '\n';
  out += "labels " + std::to_string(labels.size()) + '\n';
  for (const auto& l : labels) out += l + '\n';
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::string_view line() {
    if (pos_ >= text_.size()) throw corrupt("unexpected end of file");
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) throw corrupt("unterminated line");
    auto out = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    return out;
  }

  std::string_view expect_prefix(std::string_view prefix) {
    auto l = line();
    if (l.substr(0, prefix.size()) != prefix) {
      throw corrupt("expected '" + std::string(prefix) + "'");
    }
    return l.substr(prefix.size());
  }

  long integer(std::string_view s) {
    auto v = gestop::detail::parse_int(gestop::detail::trim(s));
    if (!v || *v < 0) throw corrupt("bad integer");
    return static_cast<long>(*v);
  }

  Matrix tensor(std::string_view name, Eigen::Index rows, Eigen::Index cols) {
    auto spec = gestop::detail::split(expect_prefix("tensor "), ' ');
    if (spec.size() != 3 || spec[0] != name || integer(spec[1]) != rows || integer(spec[2]) != cols) {
      throw corrupt("tensor " + std::string(name) + " has unexpected shape");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto values = gestop::detail::split(line(), ' ');
      if (static_cast<Eigen::Index>(values.size()) != cols) throw corrupt("short tensor row");
      for (Eigen::Index j = 0; j < cols; ++j) {
        auto v = gestop::detail::parse_double(values[static_cast<std::size_t>(j)]);
        if (!v || !std::isfinite(*v)) throw corrupt("bad weight value");
        m(i, j) = *v;
      }
    }
    return m;
  }

  Vector vector(std::string_view name, Eigen::Index rows) { return tensor(name, rows, 1); }

  Error corrupt(const std::string& why) const {
    return Error(ErrorCode::CorruptModelFile, why, line_no_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const StaticNet& net) {
  std::string out;
  detail::write_header(out, "static", net.labels);
  out += "sizes " + std::to_string(net.input_size()) + ' ' + std::to_string(net.hidden.out()) + ' ' +
         std::to_string(net.class_count()) + '\n';
  detail::write_tensor(out, "hidden.weight", net.hidden.weight);
  detail::write_tensor(out, "hidden.bias", net.hidden.bias);
  detail::write_tensor(out, "output.weight", net.output.weight);
  detail::write_tensor(out, "output.bias", net.output.bias);
  out += "end\n";
  return out;
}

inline std::string serialize_model(const DynamicNet& net) {
  std::string out;
  detail::write_header(out, "dynamic", net.labels);
  out += "sizes " + std::to_string(net.input_size()) + ' ' + std::to_string(net.encoder.out()) +
         ' ' + std::to_string(net.forward_gru.hidden()) + ' ' + std::to_string(net.class_count()) +
         '\n';
  detail::write_tensor(out, "encoder.weight", net.encoder.weight);
  detail::write_tensor(out, "encoder.bias", net.encoder.bias);
  for (auto [name, cell] : {std::pair{"gru_fwd", &net.forward_gru}, std::pair{"gru_bwd", &net.backward_gru}}) {
    const std::string n(name);
    detail::write_tensor(out, n + ".input_weight", cell->input_weight);
    detail::write_tensor(out, n + ".hidden_weight", cell->hidden_weight);
    detail::write_tensor(out, n + ".input_bias", cell->input_bias);
    detail::write_tensor(out, n + ".hidden_bias", cell->hidden_bias);
  }
  detail::write_tensor(out, "head.weight", net.head.weight);
  detail::write_tensor(out, "head.bias", net.head.bias);
  out += "end\n";
  return out;
}

inline std::string serialize_model(const AnyModel& model) {
  return std::visit([](const auto& m) { return serialize_model(m); }, model);
}

inline AnyModel parse_model(std::string_view text) {
  detail::Reader in(text);
  auto version_of = [&](std::string_view prefix) {
    auto l = in.line();
    if (l.substr(0, prefix.size()) != prefix) throw in.corrupt("expected '" + std::string(prefix) + "'");
    return in.integer(l.substr(prefix.size()));
  };
  const long format = version_of("gestop-model v=");
  if (format != kModelFormatVersion) {
    throw Error(ErrorCode::IncompatibleModelVersion, "model format v=" + std::to_string(format));
  }
  const long layout = version_of("feature-layout v=");
  if (layout != kFeatureLayoutVersion) {
    throw Error(ErrorCode::IncompatibleModelVersion, "feature layout v=" + std::to_string(layout));
  }
  const auto kind = in.expect_prefix("kind ");
  const long label_count = in.integer(in.expect_prefix("labels "));
  std::vector<std::string> labels;
  for (long i = 0; i < label_count; ++i) labels.emplace_back(in.line());

  auto sizes_field = gestop::detail::split(in.expect_prefix("sizes "), ' ');
  std::vector<Eigen::Index> sizes;
  for (auto s : sizes_field) sizes.push_back(in.integer(s));

  auto finish = [&]() {
    if (in.line() != "end") throw in.corrupt("missing end marker");
  };

  if (kind == "static") {
    if (sizes.size() != 3) throw in.corrupt("static sizes need 3 values");
    const auto [input, hidden, classes] = std::tuple{sizes[0], sizes[1], sizes[2]};
    if (classes != label_count) throw in.corrupt("class count differs from label count");
    StaticNet net;
    net.labels = std::move(labels);
    net.hidden.weight = in.tensor("hidden.weight", hidden, input);
    net.hidden.bias = in.vector("hidden.bias", hidden);
    net.output.weight = in.tensor("output.weight", classes, hidden);
    net.output.bias = in.vector("output.bias", classes);
    finish();
    return net;
  }
  if (kind == "dynamic") {
    if (sizes.size() != 4) throw in.corrupt("dynamic sizes need 4 values");
    const auto [input, enc, g, classes] = std::tuple{sizes[0], sizes[1], sizes[2], sizes[3]};
    if (classes != label_count) throw in.corrupt("class count differs from label count");
    DynamicNet net;
    net.labels = std::move(labels);
    net.encoder.weight = in.tensor("encoder.weight", enc, input);
    net.encoder.bias = in.vector("encoder.bias", enc);
    for (auto [name, cell] : {std::pair{"gru_fwd", &net.forward_gru}, std::pair{"gru_bwd", &net.backward_gru}}) {
      const std::string n(name);
      cell->input_weight = in.tensor(n + ".input_weight", 3 * g, enc);
      cell->hidden_weight = in.tensor(n + ".hidden_weight", 3 * g, g);
      cell->input_bias = in.vector(n + ".input_bias", 3 * g);
      cell->hidden_bias = in.vector(n + ".hidden_bias", 3 * g);
    }
    net.head.weight = in.tensor("head.weight", classes, 2 * g);
    net.head.bias = in.vector("head.bias", classes);
    finish();
    return net;
  }
  throw in.corrupt("unknown model kind '" + std::string(kind) + "'");
}

inline void save_model(const AnyModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so a concurrent reader never sees a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + tmp.string());
    out << serialize_model(model);
    if (!out) throw Error(ErrorCode::IOFailure, "write failed " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

template <class Net>
Net load_model_as(const std::filesystem::path& path) {
  auto model = load_model(path);
  if (auto* net = std::get_if<Net>(&model)) return std::move(*net);
  throw Error(ErrorCode::InvalidArgument, path.string() + " holds the other model kind");
}

}  // namespace gestop::nn
