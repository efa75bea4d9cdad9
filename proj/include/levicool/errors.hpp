#pragma once

#include <stdexcept>
#include <string>

namespace levicool {

/// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite state or propagator coefficients.
class IntegrationFault : public Error {
public:
    using Error::Error;
};

/// The particle image center left the ROI by more than 3 PSF widths.
class ParticleLost : public Error {
public:
    ParticleLost(const std::string& camera, double center_px)
        : Error("particle lost from " + camera + " ROI (center row " + std::to_string(center_px) + ")"),
          camera_(camera), center_px_(center_px) {}
    const std::string& camera() const { return camera_; }
    double center_px() const { return center_px_; }

private:
    std::string camera_;
    double center_px_;
};

class LowSignal : public Error {
public:
    using Error::Error;
};

class InsufficientShift : public Error {
public:
    using Error::Error;
};

class SequencingError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

}  // namespace levicool
