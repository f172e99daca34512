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

// Strict JSON field access shared by the config and file-format readers.

#ifndef LANGDA_SRC_JSON_UTIL_HPP_
#define LANGDA_SRC_JSON_UTIL_HPP_

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "langda/core.hpp"

namespace langda::detail {

inline void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                               const std::string& context) {
  if (!j.is_object()) throw InvalidArgument(context + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw InvalidArgument(context + ": unknown key \"" + item.key() + "\"");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

}  // namespace langda::detail

#endif  // LANGDA_SRC_JSON_UTIL_HPP_
