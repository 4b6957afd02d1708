#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace itr {

enum class Errc {
  // corpus
  EmptyVocabulary,
  ParseError,
  // classifier
  DimensionMismatch,
  SingleClassCorpus,
  // explain
  TooFewTokens,
  // metrics
  EmptyCounts,
  NonpositiveTime,
  UndefinedTrust,
  ZeroExpectedCell,
  TooFewGroups,
  MissingPrediction,
  MissingTruth,
  // study
  UnknownAssignment,
  DuplicateSubmission,
  ExpiredAssignment,
  InvalidLabel,
  NoEligibleItems,
  StudyComplete,
  InvalidConfig,
  // io
  IoError,
};

inline std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::EmptyVocabulary: return "empty_vocabulary";
    case Errc::ParseError: return "parse_error";
    case Errc::DimensionMismatch: return "dimension_mismatch";
    case Errc::SingleClassCorpus: return "single_class_corpus";
    case Errc::TooFewTokens: return "too_few_tokens";
    case Errc::EmptyCounts: return "empty_counts";
    case Errc::NonpositiveTime: return "nonpositive_time";
    case Errc::UndefinedTrust: return "undefined_trust";
    case Errc::ZeroExpectedCell: return "zero_expected_cell";
    case Errc::TooFewGroups: return "too_few_groups";
    case Errc::MissingPrediction: return "missing_prediction";
    case Errc::MissingTruth: return "missing_truth";
    case Errc::UnknownAssignment: return "unknown_assignment";
    case Errc::DuplicateSubmission: return "duplicate_submission";
    case Errc::ExpiredAssignment: return "expired_assignment";
    case Errc::InvalidLabel: return "invalid_label";
    case Errc::NoEligibleItems: return "no_eligible_items";
    case Errc::StudyComplete: return "study_complete";
    case Errc::InvalidConfig: return "invalid_config";
    case Errc::IoError: return "io_error";
  }
  return "unknown";
}

// All library failures surface as itr::Error; code() identifies the class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace itr
