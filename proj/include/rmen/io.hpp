#pragma once

// File formats: RMVD videos, CSV series, the dataset manifest and the
// metric reports. Numbers are written in shortest round-trip form, so text
// files reload to the identical doubles.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmen/binary.hpp"
#include "rmen/error.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/labels.hpp"
#include "rmen/phantom.hpp"
#include "rmen/signals.hpp"

namespace rmen::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Number formatting and CSV plumbing

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline std::size_t parse_index(std::string_view s, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a non-negative integer");
  }
  return v;
}

using CsvRow = std::vector<std::string>;

inline CsvRow split_csv_line(std::string_view line) {
  CsvRow cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

/// Reads a CSV whose first line must equal `header`; returns the data rows.
inline std::vector<CsvRow> read_csv(const fs::path& path, std::string_view header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw FormatError(path.string() + ": expected header '" + std::string(header) + "'");
  const std::size_t columns = split_csv_line(header).size();
  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    CsvRow row = split_csv_line(line);
    if (row.size() != columns) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                        " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string where(const fs::path& path, std::size_t row) {
  return path.string() + ": row " + std::to_string(row + 1);
}

// ---------------------------------------------------------------------------
// RMVD video

inline constexpr std::string_view kVideoMagic = "RMVD";
inline constexpr std::uint32_t kVideoVersion = 1;

inline std::vector<char> encode_video(const VideoSequence& v) {
  v.validate();
  binary::Writer w;
  w.bytes(kVideoMagic);
  w.u32(kVideoVersion);
  w.u32(static_cast<std::uint32_t>(v.frames));
  w.u32(static_cast<std::uint32_t>(v.height));
  w.u32(static_cast<std::uint32_t>(v.width));
  for (float p : v.pixels) w.f32(p);
  return w.buffer();
}

inline VideoSequence decode_video(const std::vector<char>& data, std::string id = "seq", double fps = 15.0) {
  binary::Reader r(data, "video");
  if (r.bytes(4) != kVideoMagic) throw FormatError("video: bad magic");
  if (const auto ver = r.u32(); ver != kVideoVersion) throw FormatError("video: unsupported version " + std::to_string(ver));
  VideoSequence v;
  v.id = std::move(id);
  v.fps = fps;
  v.frames = r.u32();
  v.height = r.u32();
  v.width = r.u32();
  if (v.frames < 2 || v.height == 0 || v.width == 0) throw FormatError("video: invalid extents");
  const std::size_t n = v.frames * v.height * v.width;
  r.need(n * 4);
  v.pixels.resize(n);
  for (auto& p : v.pixels) {
    p = r.f32();
    if (!(p >= 0.0f && p <= 1.0f)) throw FormatError("video: pixel value outside [0,1]");
  }
  r.expect_end();
  return v;
}

inline void write_video(const VideoSequence& v, const fs::path& path) { binary::write_file_atomic(path, encode_video(v)); }

inline VideoSequence read_video(const fs::path& path, std::string id = "seq", double fps = 15.0) {
  return decode_video(binary::read_file(path), std::move(id), fps);
}

// ---------------------------------------------------------------------------
// ECG and peaks

inline void write_ecg(const EcgTrace& ecg, const fs::path& path) {
  std::string out = "sample_index,value\n";
  for (std::size_t i = 0; i < ecg.samples.size(); ++i) out += std::to_string(i) + "," + format_number(ecg.samples[i]) + "\n";
  binary::write_file_atomic(path, out);
}

inline EcgTrace read_ecg(const fs::path& path, double rate) {
  EcgTrace ecg;
  ecg.rate = rate;
  const auto rows = read_csv(path, "sample_index,value");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (parse_index(rows[i][0], where(path, i)) != i) throw FormatError(where(path, i) + ": sample indices must be 0,1,2,...");
    ecg.samples.push_back(parse_number(rows[i][1], where(path, i)));
  }
  return ecg;
}

inline void write_peaks(const std::vector<std::size_t>& peaks, const fs::path& path) {
  std::string out = "peak_sample_index\n";
  for (std::size_t p : peaks) out += std::to_string(p) + "\n";
  binary::write_file_atomic(path, out);
}

inline std::vector<std::size_t> read_peaks(const fs::path& path) {
  std::vector<std::size_t> peaks;
  const auto rows = read_csv(path, "peak_sample_index");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    peaks.push_back(parse_index(rows[i][0], where(path, i)));
    if (i > 0 && peaks[i] <= peaks[i - 1]) throw FormatError(where(path, i) + ": peaks must be strictly increasing");
  }
  return peaks;
}

// ---------------------------------------------------------------------------
// Per-frame series

struct TruthSeries {
  std::vector<double> cardiac_phase;
  std::vector<double> resp_phase;

  friend bool operator==(const TruthSeries&, const TruthSeries&) = default;
};

inline void write_truth(const TruthSeries& t, const fs::path& path) {
  if (t.cardiac_phase.size() != t.resp_phase.size()) throw ShapeError("truth series lengths differ");
  std::string out = "frame,cardiac_phase,resp_phase\n";
  for (std::size_t i = 0; i < t.cardiac_phase.size(); ++i) {
    out += std::to_string(i) + "," + format_number(t.cardiac_phase[i]) + "," + format_number(t.resp_phase[i]) + "\n";
  }
  binary::write_file_atomic(path, out);
}

inline TruthSeries read_truth(const fs::path& path) {
  TruthSeries t;
  const auto rows = read_csv(path, "frame,cardiac_phase,resp_phase");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (parse_index(rows[i][0], where(path, i)) != i) throw FormatError(where(path, i) + ": frames must be 0,1,2,...");
    t.cardiac_phase.push_back(parse_number(rows[i][1], where(path, i)));
    t.resp_phase.push_back(parse_number(rows[i][2], where(path, i)));
  }
  return t;
}

inline void write_labels(const labels::PhaseLabelSeries& l, const fs::path& path) {
  std::string out = "frame,raw,target,labeled\n";
  for (std::size_t i = 0; i < l.raw.size(); ++i) {
    out += std::to_string(i) + "," + format_number(l.raw[i]) + "," + format_number(l.targets[i]) + "," +
           (l.labeled[i] ? "1" : "0") + "\n";
  }
  binary::write_file_atomic(path, out);
}

/// One column per named series, indexed by frame.
inline void write_frame_table(const std::vector<std::pair<std::string, const std::vector<double>*>>& columns,
                              const fs::path& path) {
  if (columns.empty()) throw ConfigError("frame table needs at least one column");
  const std::size_t n = columns.front().second->size();
  std::string out = "frame";
  for (const auto& [name, values] : columns) {
    if (values->size() != n) throw ShapeError("column '" + name + "' has a different length");
    out += "," + name;
  }
  out += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i);
    for (const auto& c : columns) out += "," + format_number((*c.second)[i]);
    out += "\n";
  }
  binary::write_file_atomic(path, out);
}

/// Reads named columns of a frame table written by write_frame_table.
inline std::vector<std::vector<double>> read_frame_table(const fs::path& path, const std::vector<std::string>& names) {
  std::string header = "frame";
  for (const auto& n : names) header += "," + n;
  const auto rows = read_csv(path, header);
  std::vector<std::vector<double>> cols(names.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (parse_index(rows[i][0], where(path, i)) != i) throw FormatError(where(path, i) + ": frames must be 0,1,2,...");
    for (std::size_t c = 0; c < names.size(); ++c) cols[c].push_back(parse_number(rows[i][c + 1], where(path, i)));
  }
  return cols;
}

// ---------------------------------------------------------------------------
// Metric reports

inline std::string report_row(const std::string& id, const evaluation::PeakMatchReport& r) {
  return id + "," + std::to_string(r.matched()) + "," + std::to_string(r.missed) + "," +
         std::to_string(r.false_positives) + "," + std::to_string(r.total_ref) + "," + format_number(r.mean_abs_offset()) +
         "\n";
}

inline std::string report_csv(const evaluation::RunReport& run) {
  std::string out = "id,matched,missed,false_positives,total_ref,mean_abs_offset\n";
  for (const auto& s : run.sequences) out += report_row(s.id, s.report);
  out += report_row("ALL", run.aggregate);
  return out;
}

inline void write_report(const evaluation::RunReport& run, const fs::path& path) {
  binary::write_file_atomic(path, report_csv(run));
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct DatasetEntry {
  std::string id;
  VideoSequence video;
  EcgTrace ecg;  // true_peaks filled from the peaks file
  TruthSeries truth;
  std::vector<phantom::IrregularEvent> events;
};

inline nlohmann::json event_to_json(const phantom::IrregularEvent& e) {
  return {{"kind", phantom::to_string(e.kind)},
          {"start_frame", e.start_frame},
          {"duration_frames", e.duration_frames},
          {"magnitude", e.magnitude}};
}

inline phantom::IrregularEvent event_from_json(const nlohmann::json& j) {
  phantom::IrregularEvent e;
  e.kind = phantom::event_kind_from_string(j.at("kind").get<std::string>());
  e.start_frame = j.at("start_frame").get<std::size_t>();
  e.duration_frames = j.value("duration_frames", std::size_t{0});
  e.magnitude = j.value("magnitude", 0.0);
  return e;
}

inline DatasetEntry dataset_entry(const phantom::PhantomSequence& s) {
  return {s.video.id, s.video, s.ecg, {s.truth.cardiac.targets, s.truth.resp_phase}, s.config.events};
}

/// Writes every entry's files next to `manifest.json` in `out_dir` and
/// returns the manifest.
inline nlohmann::json write_dataset(const std::vector<DatasetEntry>& entries, const fs::path& out_dir) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : entries) {
    if (e.id.empty() || e.id.find_first_of("/\\") != std::string::npos) {
      throw ConfigError("sequence id '" + e.id + "' cannot be used as a file name");
    }
    if (!e.ecg.true_peaks) throw ConfigError("sequence '" + e.id + "' has no reference peaks");
    const std::string video = e.id + ".rmvd", ecg = e.id + "_ecg.csv", peaks = e.id + "_peaks.csv",
                      truth = e.id + "_truth.csv";
    write_video(e.video, out_dir / video);
    write_ecg(e.ecg, out_dir / ecg);
    write_peaks(*e.ecg.true_peaks, out_dir / peaks);
    write_truth(e.truth, out_dir / truth);
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : e.events) events.push_back(event_to_json(ev));
    manifest.push_back({{"id", e.id},
                        {"video", video},
                        {"ecg", ecg},
                        {"peaks", peaks},
                        {"truth", truth},
                        {"fps", e.video.fps},
                        {"ecg_rate", e.ecg.rate},
                        {"events", events}});
  }
  binary::write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline std::vector<DatasetEntry> read_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path.string() + "'");
  const fs::path dir = manifest_path.parent_path();
  std::vector<DatasetEntry> out;
  try {
    const auto manifest = nlohmann::json::parse(in);
    if (!manifest.is_array()) throw FormatError("manifest must be a JSON array");
    for (const auto& m : manifest) {
      DatasetEntry e;
      e.id = m.at("id").get<std::string>();
      const double fps = m.at("fps").get<double>(), ecg_rate = m.at("ecg_rate").get<double>();
      e.video = read_video(dir / m.at("video").get<std::string>(), e.id, fps);
      e.ecg = read_ecg(dir / m.at("ecg").get<std::string>(), ecg_rate);
      e.ecg.true_peaks = read_peaks(dir / m.at("peaks").get<std::string>());
      e.truth = read_truth(dir / m.at("truth").get<std::string>());
      if (e.truth.cardiac_phase.size() != e.video.frames) {
        throw FormatError("sequence '" + e.id + "': truth length does not match the video");
      }
      for (const auto& ev : m.value("events", nlohmann::json::array())) e.events.push_back(event_from_json(ev));
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(manifest_path.string() + ": " + ex.what());
  }
  return out;
}

}  // namespace rmen::io
