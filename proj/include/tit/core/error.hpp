#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

namespace tit {

/// Error codes shared by every module. The string form is part of the
/// external interface (problem-detail `code`, manifest `error.code`).
enum class Errc {
  // core
  EmptyText,
  InvalidUtf8,
  WordCountBelowMinimum,
  UnknownThemeCategory,
  HashMismatch,
  DuplicateImage,
  MissingPayload,
  ParseError,
  IoError,
  // gateway
  TransportError,
  EmptyResponse,
  AuthError,
  ZeroVector,
  DimensionMismatch,
  UnparseableJudgment,
  ProfileKindMismatch,
  UnknownProfile,
  ConfigError,
  // rank metrics
  MissingScore,
  EmptyPairSet,
  LengthMismatch,
  DegenerateConstantInput,
  KeyMismatch,
  InvalidN,
  // preference aggregation
  InvalidTally,
  MissingArbitration,
  IncompleteTournament,
  UnmappedImage,
  InconsistentPromptCoverage,
  ModelSetMismatch,
  // annotation service
  RosterTooSmall,
  EmptyBenchmark,
  UnknownAnnotator,
  DuplicateJudgment,
  UnassignedPair,
  NotEscalated,
  WrongPanelSize,
  CampaignNotFound,
  PortInUse,
};

inline std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::EmptyText: return "EmptyText";
    case Errc::InvalidUtf8: return "InvalidUtf8";
    case Errc::WordCountBelowMinimum: return "WordCountBelowMinimum";
    case Errc::UnknownThemeCategory: return "UnknownThemeCategory";
    case Errc::HashMismatch: return "HashMismatch";
    case Errc::DuplicateImage: return "DuplicateImage";
    case Errc::MissingPayload: return "MissingPayload";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::TransportError: return "TransportError";
    case Errc::EmptyResponse: return "EmptyResponse";
    case Errc::AuthError: return "AuthError";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnparseableJudgment: return "UnparseableJudgment";
    case Errc::ProfileKindMismatch: return "ProfileKindMismatch";
    case Errc::UnknownProfile: return "UnknownProfile";
    case Errc::ConfigError: return "ConfigError";
    case Errc::MissingScore: return "MissingScore";
    case Errc::EmptyPairSet: return "EmptyPairSet";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::DegenerateConstantInput: return "DegenerateConstantInput";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::InvalidN: return "InvalidN";
    case Errc::InvalidTally: return "InvalidTally";
    case Errc::MissingArbitration: return "MissingArbitration";
    case Errc::IncompleteTournament: return "IncompleteTournament";
    case Errc::UnmappedImage: return "UnmappedImage";
    case Errc::InconsistentPromptCoverage: return "InconsistentPromptCoverage";
    case Errc::ModelSetMismatch: return "ModelSetMismatch";
    case Errc::RosterTooSmall: return "RosterTooSmall";
    case Errc::EmptyBenchmark: return "EmptyBenchmark";
    case Errc::UnknownAnnotator: return "UnknownAnnotator";
    case Errc::DuplicateJudgment: return "DuplicateJudgment";
    case Errc::UnassignedPair: return "UnassignedPair";
    case Errc::NotEscalated: return "NotEscalated";
    case Errc::WrongPanelSize: return "WrongPanelSize";
    case Errc::CampaignNotFound: return "CampaignNotFound";
    case Errc::PortInUse: return "PortInUse";
  }
  return "Unknown";
}

/// Pipeline stage an error originated in. `none` for errors outside the
/// scoring pipeline.
enum class Stage { none, caption, embed, judge };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::none: return "none";
    case Stage::caption: return "caption";
    case Stage::embed: return "embed";
    case Stage::judge: return "judge";
  }
  return "none";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, nlohmann::json context = nlohmann::json::object())
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  Errc code() const noexcept { return code_; }
  Stage stage() const noexcept { return stage_; }
  const nlohmann::json& context() const noexcept { return context_; }

  /// Returns a copy tagged with `s`; an existing stage tag is kept.
  Error with_stage(Stage s) const {
    Error e = *this;
    if (e.stage_ == Stage::none) e.stage_ = s;
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"code", std::string(to_string(code_))},
                     {"message", what()},
                     {"context", context_}};
    if (stage_ != Stage::none) j["stage"] = std::string(to_string(stage_));
    return j;
  }

 private:
  Errc code_;
  Stage stage_ = Stage::none;
  nlohmann::json context_;
};

}  // namespace tit
