// Copyright 2026 The agl-desk Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agl {

enum class ErrorKind {
  // graph_store
  kParse,
  kSchema,
  kDuplicateNode,
  kDuplicateEdge,
  kDanglingEdge,
  kInvalidWeight,
  kEmptySpec,
  kIo,
  kCorruptRecord,
  // mr_engine
  kMapError,
  kReduceError,
  kCorruptCheckpoint,
  // graphflat
  kMalformedGroup,
  kUnknownTarget,
  // gnn_core
  kShape,
  kCache,
  kNumerics,
  // trainer
  kShard,
  kUndefinedMetric,
  // graphinfer
  kCheckpoint,
  // cli
  kUsage,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kSchema: return "SchemaError";
    case ErrorKind::kDuplicateNode: return "DuplicateNode";
    case ErrorKind::kDuplicateEdge: return "DuplicateEdge";
    case ErrorKind::kDanglingEdge: return "DanglingEdge";
    case ErrorKind::kInvalidWeight: return "InvalidWeight";
    case ErrorKind::kEmptySpec: return "EmptySpec";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kCorruptRecord: return "CorruptRecord";
    case ErrorKind::kMapError: return "MapError";
    case ErrorKind::kReduceError: return "ReduceError";
    case ErrorKind::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::kMalformedGroup: return "MalformedGroup";
    case ErrorKind::kUnknownTarget: return "UnknownTarget";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kCache: return "CacheError";
    case ErrorKind::kNumerics: return "NumericsError";
    case ErrorKind::kShard: return "ShardError";
    case ErrorKind::kUndefinedMetric: return "UndefinedMetric";
    case ErrorKind::kCheckpoint: return "CheckpointError";
    case ErrorKind::kUsage: return "UsageError";
  }
  return "Error";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

/// Process exit status for a failure of `kind`:
/// 2 usage, 3 bad input, 4 I/O, 5 engine, 6 training numerics, 7 model.
constexpr int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kDuplicateNode:
    case ErrorKind::kDuplicateEdge:
    case ErrorKind::kDanglingEdge:
    case ErrorKind::kInvalidWeight:
    case ErrorKind::kEmptySpec:
    case ErrorKind::kCorruptRecord:
    case ErrorKind::kMalformedGroup:
    case ErrorKind::kUnknownTarget: return 3;
    case ErrorKind::kIo: return 4;
    case ErrorKind::kMapError:
    case ErrorKind::kReduceError:
    case ErrorKind::kCorruptCheckpoint: return 5;
    case ErrorKind::kNumerics:
    case ErrorKind::kShard:
    case ErrorKind::kUndefinedMetric: return 6;
    case ErrorKind::kShape:
    case ErrorKind::kCache:
    case ErrorKind::kCheckpoint: return 7;
  }
  return 1;
}

}  // namespace agl
