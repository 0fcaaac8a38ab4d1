#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmem/core_model.hpp"
#include "gmmem/diagnostics.hpp"
#include "gmmem/em_engine.hpp"
#include "gmmem/error.hpp"

namespace gmmem {

using json = nlohmann::json;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// GmmSpec <-> JSON: {"d": int, "components": [{"weight", "mean", "variance"}]}

inline json spec_to_json(const GmmSpec& spec) {
  json comps = json::array();
  for (const auto& c : spec.components()) {
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
  }
  return {{"d", spec.d()}, {"components", comps}};
}

inline GmmSpec spec_from_json(const json& j, const std::string& origin = "spec") {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::parse_error, origin + ": " + what);
  };
  if (!j.is_object()) fail("expected a JSON object");
  if (!j.contains("d") || !j["d"].is_number_unsigned()) fail("field 'd' must be a positive integer");
  if (!j.contains("components") || !j["components"].is_array()) fail("field 'components' must be an array");
  const auto d = j["d"].get<std::size_t>();
  std::vector<Component> comps;
  std::size_t idx = 0;
  for (const auto& c : j["components"]) {
    const std::string where = "components[" + std::to_string(idx) + "]";
    if (!c.is_object()) fail(where + " must be an object");
    for (const char* key : {"weight", "mean", "variance"}) {
      if (!c.contains(key)) fail(where + " is missing '" + key + "'");
    }
    if (!c["weight"].is_number()) fail(where + ".weight must be a number");
    if (!c["variance"].is_number()) fail(where + ".variance must be a number");
    if (!c["mean"].is_array()) fail(where + ".mean must be an array");
    Component comp;
    comp.weight = c["weight"].get<double>();
    comp.variance = c["variance"].get<double>();
    for (const auto& x : c["mean"]) {
      if (!x.is_number()) fail(where + ".mean must contain only numbers");
      comp.mean.push_back(x.get<double>());
    }
    comps.push_back(std::move(comp));
    ++idx;
  }
  try {
    return GmmSpec(d, std::move(comps));
  } catch (const Error& e) {
    fail(e.what());
  }
  throw Error(ErrorKind::parse_error, origin);  // unreachable
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::io_error, "write to '" + path + "' failed");
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the diagnostic.
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline GmmSpec read_spec(const std::string& path) {
  return spec_from_json(parse_json_text(read_text_file(path), path), path);
}

inline void write_spec(const std::string& path, const GmmSpec& spec) {
  write_text_file(path, spec_to_json(spec).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Dataset <-> CSV: header "x0,...,x{d-1}[,label]", one row per sample.

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t c = 0; c < data.d(); ++c) out << (c ? ",x" : "x") << c;
  if (data.has_labels()) out << ",label";
  out << '\n';
  for (std::size_t j = 0; j < data.n(); ++j) {
    const auto row = data.row(j);
    for (std::size_t c = 0; c < data.d(); ++c) {
      if (c) out << ',';
      out << format_double(row[c]);
    }
    if (data.has_labels()) out << ',' << (*data.labels())[j];
    out << '\n';
  }
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  write_dataset_csv(out, data);
  return out.str();
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace detail

inline Dataset dataset_from_csv(std::string_view text, const std::string& origin = "dataset") {
  auto fail = [&](std::size_t line, const std::string& what) {
    throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(line) + ": " + what);
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    return true;
  };

  std::string_view header;
  if (!next_line(header)) fail(1, "empty file, expected header row");
  const auto cols = detail::split_commas(detail::trim(header));
  bool has_label = !cols.empty() && detail::trim(cols.back()) == "label";
  const std::size_t d = cols.size() - (has_label ? 1 : 0);
  if (d == 0) fail(1, "header declares no coordinate columns");
  for (std::size_t c = 0; c < d; ++c) {
    if (detail::trim(cols[c]) != "x" + std::to_string(c)) {
      fail(1, "header column " + std::to_string(c) + " must be 'x" + std::to_string(c) + "'");
    }
  }

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::string_view line;
  while (next_line(line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != cols.size()) {
      fail(line_no, "expected " + std::to_string(cols.size()) + " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      const auto f = detail::trim(fields[c]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        fail(line_no, "column x" + std::to_string(c) + ": '" + std::string(f) + "' is not a number");
      }
      values.push_back(v);
    }
    if (has_label) {
      const auto f = detail::trim(fields.back());
      std::size_t lab = 0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), lab);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        fail(line_no, "label '" + std::string(f) + "' is not a nonnegative integer");
      }
      labels.push_back(lab);
    }
  }
  if (values.empty()) fail(line_no, "no sample rows");
  std::optional<std::vector<std::size_t>> labs;
  if (has_label) labs = std::move(labels);
  return Dataset(d, std::move(values), std::move(labs));
}

inline Dataset read_dataset(const std::string& path) {
  return dataset_from_csv(read_text_file(path), path);
}

inline void write_dataset(const std::string& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

// ---------------------------------------------------------------------------
// FitTrace -> CSV: iter,D_m,loglik,w0..,mu{i}_{c}..,var0..

inline std::string trace_to_csv(const FitTrace& trace) {
  std::ostringstream out;
  if (trace.entries.empty()) return "iter,D_m,loglik\n";
  const std::size_t k = trace.entries.front().estimate.k();
  const std::size_t d = trace.entries.front().estimate.d();
  out << "iter,D_m,loglik";
  for (std::size_t i = 0; i < k; ++i) out << ",w" << i;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < d; ++c) out << ",mu" << i << '_' << c;
  }
  for (std::size_t i = 0; i < k; ++i) out << ",var" << i;
  out << '\n';
  for (std::size_t t = 0; t < trace.entries.size(); ++t) {
    const auto& e = trace.entries[t];
    out << t << ',';
    if (e.d_m) out << format_double(*e.d_m);
    out << ',' << format_double(e.loglik);
    for (std::size_t i = 0; i < k; ++i) out << ',' << format_double(e.estimate.weight(i));
    for (std::size_t i = 0; i < k; ++i) {
      for (double x : e.estimate.mean(i)) out << ',' << format_double(x);
    }
    for (std::size_t i = 0; i < k; ++i) out << ',' << format_double(e.estimate.variance(i));
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Diagnostics reports -> JSON

inline json report_to_json(const GoodEventReport& report, bool include_flags = false) {
  json sources = json::array();
  for (const auto& s : report.sources) {
    json j = {{"source", s.source},
              {"beta", s.beta},
              {"n_source", s.n_source},
              {"fail_e1", s.fail_e1},
              {"fail_e2", s.fail_e2},
              {"fail_e3", s.fail_e3},
              {"bad", s.bad},
              {"empirical_bad_rate", s.empirical_bad_rate ? json(*s.empirical_bad_rate) : json(nullptr)},
              {"theoretical_bound", s.theoretical_bound},
              {"slack", s.slack()},
              {"within_bound", s.within_bound()}};
    if (include_flags) {
      json flags = json::array();
      for (const auto& f : s.flags) flags.push_back({f.e1, f.e2, f.e3});
      j["flags"] = std::move(flags);
    }
    sources.push_back(std::move(j));
  }
  return {{"target", report.target}, {"sources", sources}};
}

}  // namespace gmmem
