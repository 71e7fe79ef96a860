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

#ifndef MIALAB_CORE_TEXT_IO_HPP_
#define MIALAB_CORE_TEXT_IO_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mialab {

// Shortest decimal form that parses back to the identical double.
std::string FormatDouble(double value);
double ParseDouble(std::string_view text);

std::vector<std::string_view> SplitFields(std::string_view line, char sep);

std::string ReadTextFile(const std::filesystem::path& path);
// Creates parent directories as needed.
void WriteTextFile(const std::filesystem::path& path, std::string_view text);

}  // namespace mialab

#endif  // MIALAB_CORE_TEXT_IO_HPP_
