#pragma once

// Dataset persistence: raw uint8 clip files, per-sample metadata, and a
// JSONL manifest listing every sample with its labels and file paths.
//
// Clips are stored as uint8 both on disk and in memory (a 700-sample set
// would not fit in RAM as doubles); values convert exactly because rendered
// voxels are quantized to the same 1/255 grid before storage.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcbm/encoder.hpp"
#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"
#include "vcbm/synth.hpp"
#include "vcbm/version.hpp"

namespace vcbm {

// ---------------------------------------------------------------------------
// Clip files: "VCBMCLIP" magic, version, dtype, view, 4 extents, raw bytes.

inline constexpr char kClipMagic[8] = {'V', 'C', 'B', 'M', 'C', 'L', 'I', 'P'};

struct StoredClip {
  View view = View::kFront;
  std::size_t t = 0, h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> bytes;  // t-major, then h, w, c

  std::size_t frame_size() const { return h * w * c; }

  static StoredClip from_clip(const VideoClip& clip) {
    clip.validate();
    StoredClip s;
    s.view = clip.view;
    s.t = clip.t;
    s.h = clip.h;
    s.w = clip.w;
    s.c = clip.c;
    s.bytes.resize(clip.voxels.size());
    for (std::size_t i = 0; i < clip.voxels.size(); ++i) {
      s.bytes[i] = static_cast<std::uint8_t>(
          std::lround(clip.voxels[i] * 255.0));
    }
    return s;
  }

  VideoClip to_clip() const {
    VideoClip clip = VideoClip::make(view, t, h, w, c);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      clip.voxels[i] = static_cast<double>(bytes[i]) / 255.0;
    }
    return clip;
  }

  // Materializes only the selected frames as doubles, recording the source
  // frame indices as frame_times (matches select_frames on the full clip).
  VideoClip select_to_clip(const std::vector<std::size_t>& indices) const {
    if (indices.empty()) throw data_error("select_to_clip: empty index list");
    VideoClip clip = VideoClip::make(view, indices.size(), h, w, c);
    const std::size_t fs = frame_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= t) {
        throw data_error("select_to_clip: frame index " +
                         std::to_string(indices[i]) + " out of range");
      }
      const std::uint8_t* src = bytes.data() + indices[i] * fs;
      double* dst = clip.voxels.data() + i * fs;
      for (std::size_t j = 0; j < fs; ++j) {
        dst[j] = static_cast<double>(src[j]) / 255.0;
      }
      clip.frame_times[i] = static_cast<double>(indices[i]);
    }
    return clip;
  }
};

namespace io_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<std::uint8_t> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes;
  in.seekg(0, std::ios::end);
  bytes.resize(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw data_error("failed reading file: " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("failed writing file: " + path.string());
}

}  // namespace io_detail

inline void write_clip_file(const std::filesystem::path& path,
                            const StoredClip& clip) {
  std::vector<std::uint8_t> out;
  out.reserve(28 + clip.bytes.size());
  out.insert(out.end(), kClipMagic, kClipMagic + 8);
  io_detail::put_u32(out, kClipFormatVersion);
  out.push_back(1);  // dtype: uint8
  out.push_back(clip.view == View::kGaze ? 0 : 1);
  out.push_back(0);
  out.push_back(0);
  io_detail::put_u32(out, static_cast<std::uint32_t>(clip.t));
  io_detail::put_u32(out, static_cast<std::uint32_t>(clip.h));
  io_detail::put_u32(out, static_cast<std::uint32_t>(clip.w));
  io_detail::put_u32(out, static_cast<std::uint32_t>(clip.c));
  out.insert(out.end(), clip.bytes.begin(), clip.bytes.end());
  io_detail::write_file_bytes(path, out);
}

inline StoredClip read_clip_file(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file_bytes(path);
  if (bytes.size() < 32 || std::memcmp(bytes.data(), kClipMagic, 8) != 0) {
    throw data_error("not a clip file: " + path.string());
  }
  const std::uint32_t version = io_detail::get_u32(bytes.data() + 8);
  if (version != kClipFormatVersion) {
    throw data_error("clip file " + path.string() +
                     ": unsupported version " + std::to_string(version));
  }
  if (bytes[12] != 1) {
    throw data_error("clip file " + path.string() + ": unsupported dtype");
  }
  StoredClip clip;
  clip.view = bytes[13] == 0 ? View::kGaze : View::kFront;
  clip.t = io_detail::get_u32(bytes.data() + 16);
  clip.h = io_detail::get_u32(bytes.data() + 20);
  clip.w = io_detail::get_u32(bytes.data() + 24);
  clip.c = io_detail::get_u32(bytes.data() + 28);
  const std::size_t expected = clip.t * clip.h * clip.w * clip.c;
  if (expected == 0 || bytes.size() != 32 + expected) {
    throw data_error("clip file " + path.string() +
                     ": size does not match header");
  }
  clip.bytes.assign(bytes.begin() + 32, bytes.end());
  return clip;
}

// ---------------------------------------------------------------------------
// Annotation records <-> manifest JSONL

inline nlohmann::json record_to_json(const AnnotationRecord& r) {
  std::vector<int> ego_ids;
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    if (r.ego[j]) ego_ids.push_back(static_cast<int>(j));
  }
  return nlohmann::json{{"sample_id", r.sample_id},
                        {"maneuver", maneuver_code(r.maneuver)},
                        {"ego_explanations", ego_ids},
                        {"gaze_explanation", r.gaze_explanation},
                        {"split", split_name(r.split)},
                        {"front", r.front_path},
                        {"gaze", r.gaze_path},
                        {"meta", r.meta_path}};
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  AnnotationRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.maneuver = maneuver_from_code(j.at("maneuver").get<std::string>());
  for (const auto& idj : j.at("ego_explanations")) {
    const int id = idj.get<int>();
    if (id < 0 || id >= static_cast<int>(kNumEgoExplanations)) {
      throw data_error("annotation '" + r.sample_id +
                       "': unknown ego explanation id " + std::to_string(id));
    }
    if (r.ego[static_cast<std::size_t>(id)]) {
      throw data_error("annotation '" + r.sample_id +
                       "': duplicate ego explanation id " + std::to_string(id));
    }
    r.ego[static_cast<std::size_t>(id)] = 1;
  }
  r.gaze_explanation = j.at("gaze_explanation").get<int>();
  r.split = split_from_name(j.at("split").get<std::string>());
  r.front_path = j.value("front", "");
  r.gaze_path = j.value("gaze", "");
  r.meta_path = j.value("meta", "");
  r.validate();
  return r;
}

inline void save_annotations(const std::filesystem::path& path,
                             const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write manifest: " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

inline std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path.string());
  std::vector<AnnotationRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("manifest line " + std::to_string(line_no) +
                       ": invalid JSON: " + e.what());
    }
    AnnotationRecord r;
    try {
      r = record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("manifest line " + std::to_string(line_no) + ": " +
                       e.what());
    } catch (const data_error& e) {
      throw data_error("manifest line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (!seen.insert(r.sample_id).second) {
      throw data_error("manifest line " + std::to_string(line_no) +
                       ": duplicate sample_id '" + r.sample_id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Dataset directories

struct DatasetSample {
  AnnotationRecord record;
  StoredClip front;
  GazeTrajectory trajectory;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetSample> samples;

  std::vector<std::size_t> split_indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].record.split == split) out.push_back(i);
    }
    return out;
  }
};

inline nlohmann::json generation_config_to_json(const GenerationConfig& cfg) {
  return nlohmann::json{
      {"n", cfg.n},
      {"seed", cfg.seed},
      {"shape", {cfg.t, cfg.h, cfg.w, cfg.c}},
      {"frequency_profile", cfg.frequency_profile},
      {"noise", cfg.render.noise},
      {"position_jitter", cfg.render.position_jitter},
      {"intensity_jitter", cfg.render.intensity_jitter},
      {"stored_gaze", gaze_variant_name(cfg.stored_gaze)}};
}

// Writes manifest.jsonl, dataset.json, and samples/<id>/{front.bin,gaze.bin,
// meta.json}. Splits must already be assigned on the records.
inline void write_dataset(const std::filesystem::path& dir,
                          std::vector<SyntheticSample>& samples,
                          const GenerationConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  std::vector<AnnotationRecord> records;
  records.reserve(samples.size());
  for (auto& s : samples) {
    const fs::path sub = fs::path("samples") / s.record.sample_id;
    fs::create_directories(dir / sub);
    s.record.front_path = (sub / "front.bin").generic_string();
    s.record.gaze_path = (sub / "gaze.bin").generic_string();
    s.record.meta_path = (sub / "meta.json").generic_string();
    write_clip_file(dir / s.record.front_path,
                    StoredClip::from_clip(s.front));
    write_clip_file(dir / s.record.gaze_path, StoredClip::from_clip(s.gaze));
    nlohmann::json meta{{"format_version", kClipFormatVersion},
                        {"sample_id", s.record.sample_id},
                        {"gaze_trajectory", s.trajectory}};
    std::ofstream meta_out(dir / s.record.meta_path, std::ios::trunc);
    if (!meta_out) {
      throw data_error("cannot write meta for sample " + s.record.sample_id);
    }
    meta_out << meta.dump(1) << "\n";
    records.push_back(s.record);
  }
  save_annotations(dir / "manifest.jsonl", records);
  nlohmann::json info = generation_config_to_json(cfg);
  info["format_version"] = kManifestFormatVersion;
  info["tool_version"] = kToolVersion;
  std::ofstream info_out(dir / "dataset.json", std::ios::trunc);
  info_out << info.dump(1) << "\n";
}

// Loads the manifest plus each sample's front clip and gaze trajectory.
// Stored gaze clips are not loaded; gaze views are re-derived from the front
// clip and trajectory so any gaze variant can be applied at run time.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.root = dir;
  auto records = load_annotations(dir / "manifest.jsonl");
  ds.samples.reserve(records.size());
  for (auto& r : records) {
    DatasetSample s;
    if (r.front_path.empty()) {
      throw data_error("sample '" + r.sample_id + "': missing front path");
    }
    s.front = read_clip_file(dir / r.front_path);
    nlohmann::json meta;
    {
      std::ifstream meta_in(dir / r.meta_path);
      if (!meta_in) {
        throw data_error("sample '" + r.sample_id + "': cannot open meta");
      }
      try {
        meta = nlohmann::json::parse(meta_in);
      } catch (const nlohmann::json::exception& e) {
        throw data_error("sample '" + r.sample_id + "': bad meta JSON: " +
                         e.what());
      }
    }
    if (meta.value("sample_id", "") != r.sample_id) {
      throw data_error("sample '" + r.sample_id +
                       "': meta sample_id mismatch");
    }
    for (const auto& p : meta.at("gaze_trajectory")) {
      if (!p.is_array() || p.size() != 2) {
        throw data_error("sample '" + r.sample_id + "': bad trajectory entry");
      }
      s.trajectory.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (s.trajectory.size() != s.front.t) {
      throw data_error("sample '" + r.sample_id +
                       "': trajectory length does not match clip frames");
    }
    s.record = std::move(r);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Checksum: FNV-1a 64 over the manifest bytes, then every referenced file in
// manifest order. Stable across platforms for byte-identical datasets.

namespace io_detail {
inline void fnv1a(std::uint64_t& h, const std::uint8_t* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
}
}  // namespace io_detail

inline std::string dataset_checksum(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto manifest = io_detail::read_file_bytes(dir / "manifest.jsonl");
  io_detail::fnv1a(h, manifest.data(), manifest.size());
  for (const auto& r : load_annotations(dir / "manifest.jsonl")) {
    for (const auto& rel : {r.front_path, r.gaze_path, r.meta_path}) {
      if (rel.empty()) continue;
      const auto bytes = io_detail::read_file_bytes(dir / rel);
      io_detail::fnv1a(h, bytes.data(), bytes.size());
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace vcbm
