#pragma once

#include <stdexcept>
#include <string>

namespace formtree {

// Malformed input: bad phrase records, invalid configs, invalid generator
// specs. The CLI maps this to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The input is well formed but the pipeline cannot produce a result
// ("no structure found", "template mismatch"). Exit status 2.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote field oracle failed (unreachable, timeout, bad response).
class OracleError : public std::runtime_error {
 public:
  OracleError(const std::string& what, int cluster_id)
      : std::runtime_error(what), cluster_id_(cluster_id) {}

  int cluster_id() const { return cluster_id_; }

 private:
  int cluster_id_;
};

}  // namespace formtree
