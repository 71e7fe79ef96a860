/*
 * Copyright 2026 The mialab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef MIALAB_CORE_JSON_UTIL_HPP_
#define MIALAB_CORE_JSON_UTIL_HPP_

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace mialab {

// Rejects keys outside `allowed`, so a misspelt field is not silently dropped.
inline void CheckKnownKeys(const nlohmann::json& j,
                           std::initializer_list<std::string_view> allowed,
                           std::string_view context) {
  if (!j.is_object()) {
    throw ConfigError(std::string(context) + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError(std::string(context) + ": unknown key \"" + item.key() + "\"");
    }
  }
}

}  // namespace mialab

#endif  // MIALAB_CORE_JSON_UTIL_HPP_
