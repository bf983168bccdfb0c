#pragma once

#include <stdexcept>
#include <string>

namespace canary {

// Malformed byte sequences and packets that violate the wire format.
class CodecError : public std::runtime_error {
public:
    explicit CodecError(const std::string& what) : std::runtime_error(what) {}
};

// Protocol rule violations (malformed senders, impossible counters, ...).
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid experiment or switch configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Internal simulator inconsistency; indicates a bug, not bad input.
class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace canary
