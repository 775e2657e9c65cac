#pragma once

#include <stdexcept>
#include <string>

namespace qsm {

// Base for all typed toolkit errors so callers can catch the family at once.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Spectrum handed to an inverse transform is not conjugate-symmetric.
class NonHermitianSpectrum : public Error {
public:
    explicit NonHermitianSpectrum(const std::string& msg) : Error(msg) {}
};

// Two objects that must share a grid (dims and voxel size) do not.
class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& msg) : Error(msg) {}
};

class InsufficientOrientations : public Error {
public:
    explicit InsufficientOrientations(const std::string& msg) : Error(msg) {}
};

class DegenerateOrientations : public Error {
public:
    explicit DegenerateOrientations(const std::string& msg) : Error(msg) {}
};

// backward() called without a forward() cache for the same batch.
class MissingForwardCache : public Error {
public:
    explicit MissingForwardCache(const std::string& msg) : Error(msg) {}
};

// Reference volume is identically zero where a metric needs to divide by it.
class ZeroReference : public Error {
public:
    explicit ZeroReference(const std::string& msg) : Error(msg) {}
};

class ShapeOutOfBounds : public Error {
public:
    explicit ShapeOutOfBounds(const std::string& msg) : Error(msg) {}
};

class EmptyDataset : public Error {
public:
    explicit EmptyDataset(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Missing or malformed on-disk state (volumes, checkpoints).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace qsm
