#include "longimp/error.hpp"

namespace longimp {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSchema: return "InvalidSchema";
    case ErrorKind::DuplicateTimePoint: return "DuplicateTimePoint";
    case ErrorKind::UnknownStub: return "UnknownStub";
    case ErrorKind::MalformedWideName: return "MalformedWideName";
    case ErrorKind::MissingInFactor: return "MissingInFactor";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::ParseCsv: return "ParseCsv";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularObservedBlock: return "SingularObservedBlock";
    case ErrorKind::InvalidDof: return "InvalidDof";
    case ErrorKind::EmptyInterval: return "EmptyInterval";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::PerfectSeparation: return "PerfectSeparation";
    case ErrorKind::EmptyCategory: return "EmptyCategory";
    case ErrorKind::NonMonotoneCutpoints: return "NonMonotoneCutpoints";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SingularFit: return "SingularFit";
    case ErrorKind::TooFewClusters: return "TooFewClusters";
    case ErrorKind::TooFewDonors: return "TooFewDonors";
    case ErrorKind::UnknownLevel: return "UnknownLevel";
    case ErrorKind::UnknownParam: return "UnknownParam";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::DegenerateMean: return "DegenerateMean";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ChainFailure: return "ChainFailure";
    case ErrorKind::UnsupportedMethod: return "UnsupportedMethod";
    case ErrorKind::MisalignedParams: return "MisalignedParams";
    case ErrorKind::TooFewImputations: return "TooFewImputations";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

ParseFailure::ParseFailure(std::size_t offset, const std::string& message)
    : Error(ErrorKind::ParseError, message + " (at offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

}  // namespace longimp
