#pragma once

#include <stdexcept>
#include <string>
#include <string_view>


namespace crowdloc {

  //! Failure classes shared by every stage. The CLI maps each one to its own
  //! exit code, so the numeric values are part of the tool's interface.
  enum class ErrorCode : int
  {
    BehindCamera = 10,
    NoIntersection,
    DegenerateRay,
    DirectionUndefined,
    ObservationInvalid,
    LayoutInfeasible,
    InsufficientData,
    Undefined,
    DegenerateAlignment,
    SceneInfeasible,
    ConfigError,
    IoError,
  };

  inline auto to_string(ErrorCode code) -> std::string_view
  {
    switch (code)
    {
    case ErrorCode::BehindCamera:
      return "BehindCamera";
    case ErrorCode::NoIntersection:
      return "NoIntersection";
    case ErrorCode::DegenerateRay:
      return "DegenerateRay";
    case ErrorCode::DirectionUndefined:
      return "DirectionUndefined";
    case ErrorCode::ObservationInvalid:
      return "ObservationInvalid";
    case ErrorCode::LayoutInfeasible:
      return "LayoutInfeasible";
    case ErrorCode::InsufficientData:
      return "InsufficientData";
    case ErrorCode::Undefined:
      return "Undefined";
    case ErrorCode::DegenerateAlignment:
      return "DegenerateAlignment";
    case ErrorCode::SceneInfeasible:
      return "SceneInfeasible";
    case ErrorCode::ConfigError:
      return "ConfigError";
    case ErrorCode::IoError:
      return "IoError";
    }
    return "Unknown";
  }

  class Error : public std::runtime_error
  {
  public:
    Error(ErrorCode code, const std::string& what)
      : std::runtime_error{std::string{to_string(code)} + ": " + what}
      , _code{code}
      , _message{what}
    {
    }

    auto code() const noexcept -> ErrorCode
    {
      return _code;
    }

    //! The message without the error class prefix.
    auto message() const noexcept -> const std::string&
    {
      return _message;
    }

  private:
    ErrorCode _code;
    std::string _message;
  };

}  // namespace crowdloc
