#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptprism {

enum class Errc {
  // taxonomy
  InvalidIdentifier,
  DepthExceeded,
  UnknownTag,
  UnknownRole,
  // prompt_model
  MismatchedTag,
  UnclosedTag,
  NestedTag,
  NoUserMessage,
  // perturb
  InvalidComponentName,
  InvalidPosition,
  NoComponentsFound,
  IndexOutOfRange,
  // profiler
  RegistryMismatch,
  // llm_gateway
  BackendUnavailable,
  BackendError,
  AuthMissing,
  BudgetExceeded,
  AnnotationUnparseable,
  InsufficientVariants,
  // evalkit
  EmptySample,
  ZeroBaseline,
  InsufficientGroups,
  InsufficientSamples,
  // io / config
  MalformedRecord,
  InvalidConfig,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidIdentifier: return "InvalidIdentifier";
    case Errc::DepthExceeded: return "DepthExceeded";
    case Errc::UnknownTag: return "UnknownTag";
    case Errc::UnknownRole: return "UnknownRole";
    case Errc::MismatchedTag: return "MismatchedTag";
    case Errc::UnclosedTag: return "UnclosedTag";
    case Errc::NestedTag: return "NestedTag";
    case Errc::NoUserMessage: return "NoUserMessage";
    case Errc::InvalidComponentName: return "InvalidComponentName";
    case Errc::InvalidPosition: return "InvalidPosition";
    case Errc::NoComponentsFound: return "NoComponentsFound";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::RegistryMismatch: return "RegistryMismatch";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::BackendError: return "BackendError";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::AnnotationUnparseable: return "AnnotationUnparseable";
    case Errc::InsufficientVariants: return "InsufficientVariants";
    case Errc::EmptySample: return "EmptySample";
    case Errc::ZeroBaseline: return "ZeroBaseline";
    case Errc::InsufficientGroups: return "InsufficientGroups";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised by the parser; carries the tag name and the byte offset in the raw text.
class TagError : public Error {
 public:
  TagError(Errc code, std::string tag, std::size_t offset, const std::string& message)
      : Error(code, message), tag_(std::move(tag)), offset_(offset) {}

  const std::string& tag() const noexcept { return tag_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string tag_;
  std::size_t offset_;
};

}  // namespace promptprism
