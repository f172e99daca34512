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

#ifndef LANGDA_DATASET_IO_HPP_
#define LANGDA_DATASET_IO_HPP_

#include <filesystem>
#include <string>

#include "langda/scene_synth.hpp"

namespace langda {

// Binary PPM (P6) / PGM (P5) codecs. Images are quantized to 8 bits.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
// Mask values equal to `ignore_index` are written as 255 and mapped back on read.
void write_pgm(const std::filesystem::path& path, const LabelMap& mask, int ignore_index);
LabelMap read_pgm(const std::filesystem::path& path, int ignore_index);

// Writes images/, masks/ (source), eval_masks/ (target ground truth) and manifest.json.
void export_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Loads a directory written by export_dataset, or any directory following the
// same manifest layout.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace langda

#endif  // LANGDA_DATASET_IO_HPP_
