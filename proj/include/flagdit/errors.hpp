#pragma once

#include <stdexcept>
#include <string>

namespace flagdit {

// Shapes that do not line up for an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Grid dimensions incompatible with the patch size.
class LayoutError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Token sequence whose kinds do not follow the row/frame pattern.
class StructureError : public std::invalid_argument {
public:
    explicit StructureError(const std::string& what, long index = -1)
        : std::invalid_argument(what), index_(index) {}
    long index() const { return index_; }

private:
    long index_;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Violated precondition of an otherwise well-typed call.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Non-finite values or other failures discovered while running.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace flagdit
