/*
 * Copyright 2026 The C2A Simulator Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace c2a {

// Every module reports failures through one of these. The CLI maps any of
// them to a nonzero exit code with the message as diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class DegenerateInputError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class PartitionError : public Error { public: using Error::Error; };
class AggregationError : public Error { public: using Error::Error; };
class RoundError : public Error { public: using Error::Error; };
class PoisonedGradientError : public Error { public: using Error::Error; };
class UndefinedSimilarityError : public Error { public: using Error::Error; };

}  // namespace c2a
