#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mosq {

enum class ErrorKind {
  ClipTooShort,
  ShapeMismatch,
  InputTooSmall,
  InputTooShort,
  DegenerateBatch,
  EmptySequence,
  NonScalarLoss,
  TooFewScores,
  ScoreOutOfRange,
  NegativeSigma,
  IllegalCombination,
  DegenerateInput,
  TooFewGroups,
  ParseError,
  MissingClip,
  BadSampleRate,
  BadAudioFormat,
  InvalidSpec,
  InvalidConfig,
  Io,
  BadCheckpoint,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ClipTooShort: return "ClipTooShort";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InputTooSmall: return "InputTooSmall";
    case ErrorKind::InputTooShort: return "InputTooShort";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::TooFewScores: return "TooFewScores";
    case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorKind::NegativeSigma: return "NegativeSigma";
    case ErrorKind::IllegalCombination: return "IllegalCombination";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::TooFewGroups: return "TooFewGroups";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingClip: return "MissingClip";
    case ErrorKind::BadSampleRate: return "BadSampleRate";
    case ErrorKind::BadAudioFormat: return "BadAudioFormat";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mosq
