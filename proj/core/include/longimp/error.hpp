#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace longimp {

/// Every failure the library raises carries one of these kinds so callers
/// (and the CLI exit-code mapping) can dispatch without parsing messages.
enum class ErrorKind {
  // tabular
  InvalidSchema,
  DuplicateTimePoint,
  UnknownStub,
  MalformedWideName,
  MissingInFactor,
  UnknownColumn,
  ParseCsv,
  // stochastic
  NotPositiveDefinite,
  SingularObservedBlock,
  InvalidDof,
  EmptyInterval,
  // fitters
  RankDeficient,
  PerfectSeparation,
  EmptyCategory,
  NonMonotoneCutpoints,
  NonConvergence,
  ParseError,
  SingularFit,
  // imputers
  TooFewClusters,
  TooFewDonors,
  UnknownLevel,
  UnknownParam,
  DegenerateSeries,
  DegenerateMean,
  InvalidSpec,
  ChainFailure,
  UnsupportedMethod,
  // pooling
  MisalignedParams,
  TooFewImputations,
  // cli
  BadConfig,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failures also report the byte offset into the input text.
class ParseFailure : public Error {
 public:
  ParseFailure(std::size_t offset, const std::string& message);

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace longimp
