// Copyright 2026 The sgsrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sgsrl {

// Precondition violations use std::invalid_argument directly. The types below
// cover failures that callers are expected to tell apart.

class GenerationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Retryable: connection refused, timeout, 5xx.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The peer answered, but the answer is unusable. Carries the raw body.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(const std::string& what, std::string payload)
      : std::runtime_error(what), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

}  // namespace sgsrl
