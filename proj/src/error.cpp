// Copyright 2026 The geotrain Authors.
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

#include "geotrain/error.hpp"

namespace geotrain {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kDuplicateName: return "DuplicateName";
    case ErrorCode::kUnknownArgReference: return "UnknownArgReference";
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kInvalidDag: return "InvalidDag";
    case ErrorCode::kMissingShapeAttr: return "MissingShapeAttr";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnassignedNode: return "UnassignedNode";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kInvalidMicroBatchCount: return "InvalidMicroBatchCount";
    case ErrorCode::kZeroTime: return "ZeroTime";
    case ErrorCode::kInvalidRatio: return "InvalidRatio";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kInfeasibleMemory: return "InfeasibleMemory";
    case ErrorCode::kDisconnectedNetwork: return "DisconnectedNetwork";
    case ErrorCode::kEmptyVector: return "EmptyVector";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNoCommunication: return "NoCommunication";
    case ErrorCode::kDeadlock: return "Deadlock";
    case ErrorCode::kMissingActivationCache: return "MissingActivationCache";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kUnknownConsumer: return "UnknownConsumer";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace geotrain
