// Copyright 2026 The LangDA Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "langda/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace langda {
namespace fs = std::filesystem;
namespace {

constexpr int kManifestVersion = 1;

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const fs::path& path) {
  PnmHeader h;
  auto next_token = [&]() {
    std::string tok;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> tok;
    return tok;
  };
  h.magic = next_token();
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw FormatError("malformed PNM header in " + path.string());
  }
  in.get();  // single whitespace before raster
  if (h.width < 1 || h.height < 1 || h.maxval != 255)
    throw FormatError("unsupported PNM geometry in " + path.string());
  return h;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_ppm(const fs::path& path, const Image& image) {
  if (image.channels() != 3) throw InvalidArgument("write_ppm: expected 3 channels");
  std::ofstream out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::string raster(static_cast<std::size_t>(image.pixels()) * 3, '\0');
  for (Eigen::Index p = 0; p < image.pixels(); ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image.data(c, p), 0.0f, 1.0f);
      raster[static_cast<std::size_t>(p) * 3 + c] =
          static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const PnmHeader h = read_pnm_header(in, path);
  if (h.magic != "P6") throw FormatError("not a binary PPM: " + path.string());
  Image image(3, h.height, h.width);
  std::string raster(static_cast<std::size_t>(h.width) * h.height * 3, '\0');
  if (!in.read(raster.data(), static_cast<std::streamsize>(raster.size())))
    throw FormatError("truncated PPM raster in " + path.string());
  for (Eigen::Index p = 0; p < image.pixels(); ++p)
    for (int c = 0; c < 3; ++c)
      image.data(c, p) =
          static_cast<unsigned char>(raster[static_cast<std::size_t>(p) * 3 + c]) / 255.0f;
  return image;
}

void write_pgm(const fs::path& path, const LabelMap& mask, int ignore_index) {
  std::ofstream out = open_out(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::string raster(static_cast<std::size_t>(mask.size()), '\0');
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    const int v = mask.labels[p] == ignore_index ? 255 : mask.labels[p];
    if (v < 0 || v > 255) throw InvalidArgument("write_pgm: label does not fit in 8 bits");
    raster[static_cast<std::size_t>(p)] = static_cast<char>(static_cast<unsigned char>(v));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

LabelMap read_pgm(const fs::path& path, int ignore_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const PnmHeader h = read_pnm_header(in, path);
  if (h.magic != "P5") throw FormatError("not a binary PGM: " + path.string());
  LabelMap mask(h.height, h.width);
  std::string raster(static_cast<std::size_t>(mask.size()), '\0');
  if (!in.read(raster.data(), static_cast<std::streamsize>(raster.size())))
    throw FormatError("truncated PGM raster in " + path.string());
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    const int v = static_cast<unsigned char>(raster[static_cast<std::size_t>(p)]);
    if (v != 255 && v >= ignore_index)
      throw FormatError("mask value " + std::to_string(v) + " out of range in " + path.string());
    mask.labels[p] = v == 255 ? ignore_index : v;
  }
  return mask;
}

void export_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "eval_masks");
  const int ignore = static_cast<int>(dataset.class_set.size());
  nlohmann::json manifest;
  manifest["version"] = kManifestVersion;
  manifest["spec_hash"] = dataset.spec_hash;
  manifest["class_set"] = dataset.class_set;
  manifest["ignore_value"] = 255;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : dataset.source) {
    if (!s.mask) throw InvalidArgument("export_dataset: source sample " + s.id + " has no mask");
    write_ppm(dir / "images" / (s.id + ".ppm"), s.image);
    write_pgm(dir / "masks" / (s.id + ".pgm"), *s.mask, ignore);
    entries.push_back({{"id", s.id},
                       {"split", "source"},
                       {"group", s.group},
                       {"image", "images/" + s.id + ".ppm"},
                       {"mask", "masks/" + s.id + ".pgm"}});
  }
  for (const auto& s : dataset.target) {
    write_ppm(dir / "images" / (s.id + ".ppm"), s.image);
    entries.push_back({{"id", s.id},
                       {"split", "target"},
                       {"group", s.group},
                       {"image", "images/" + s.id + ".ppm"}});
  }
  manifest["entries"] = entries;
  nlohmann::json eval = nlohmann::json::array();
  for (const auto& [id, mask] : dataset.eval.masks) {
    write_pgm(dir / "eval_masks" / (id + ".pgm"), mask, ignore);
    eval.push_back({{"id", id}, {"mask", "eval_masks/" + id + ".pgm"}});
  }
  manifest["eval"] = eval;
  std::ofstream out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path root = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.class_set = manifest.at("class_set").get<std::vector<std::string>>();
    ds.spec_hash = manifest.value("spec_hash", std::string());
    const int ignore = static_cast<int>(ds.class_set.size());
    for (const auto& e : manifest.at("entries")) {
      SegSample s;
      s.id = e.at("id").get<std::string>();
      s.group = e.value("group", std::string());
      s.image = read_ppm(root / e.at("image").get<std::string>());
      const std::string split = e.at("split").get<std::string>();
      if (split == "source") {
        s.mask = read_pgm(root / e.at("mask").get<std::string>(), ignore);
        ds.source.push_back(std::move(s));
      } else if (split == "target") {
        ds.target.push_back(std::move(s));
      } else {
        throw FormatError("manifest: unknown split '" + split + "' for " + s.id);
      }
    }
    if (auto it = manifest.find("eval"); it != manifest.end())
      for (const auto& e : *it)
        ds.eval.masks.emplace(e.at("id").get<std::string>(),
                              read_pgm(root / e.at("mask").get<std::string>(), ignore));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace langda
