/*
 * Copyright 2026 The repcond Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace repcond {

/// Base class of every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array shapes that cannot be combined by an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An argument outside its documented domain (negative sigma, lo > hi, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A caller broke an interface contract (non-scalar loss, missing weights).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; the message names the offending line.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structurally well-formed data that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Corrupt, truncated or mismatched checkpoint/matrix files.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Non-finite values surfaced during training or evaluation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace repcond
