#pragma once

#include <stdexcept>
#include <string>

namespace beantrap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Transport target outside what a strip can carry in the critical state.
class FeasibilityError : public Error {
public:
    FeasibilityError(std::string strip, const std::string& what)
        : Error(what), strip_(std::move(strip)) {}
    const std::string& strip() const noexcept { return strip_; }

private:
    std::string strip_;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}
    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

class SingularPointError : public Error {
public:
    using Error::Error;
};

// Config problems carry the offending key path, e.g. "protocol.stages[2].kind".
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace beantrap
