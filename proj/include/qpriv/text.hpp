/*
 * Copyright 2026 The qpriv Authors.
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

#ifndef QPRIV_TEXT_HPP_
#define QPRIV_TEXT_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace qpriv {

// Case-folded word tokens. Runs of letters (and '_', and any non-ASCII byte)
// form one token; every ASCII punctuation character and every decimal digit
// is a token of its own; whitespace separates.
std::vector<std::string> tokenize_words(std::string_view text);

// ASCII case fold with whitespace runs collapsed to one space and trimmed.
std::string normalize_text(std::string_view text);

std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

}  // namespace qpriv

#endif  // QPRIV_TEXT_HPP_
