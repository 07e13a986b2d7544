#pragma once

#include <stdexcept>
#include <string>

namespace biodiv {

// Error classes map one-to-one onto the CLI exit codes.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class parse_error : public error {
public:
    using error::error;
};

class domain_error : public error {
public:
    using error::error;
};

class no_finite_solution : public domain_error {
public:
    using domain_error::domain_error;
};

class table_size_exceeded : public domain_error {
public:
    using domain_error::domain_error;
};

class inconsistent_nesting : public parse_error {
public:
    using parse_error::parse_error;
};

class convergence_error : public error {
public:
    using error::error;
};

class rejection_loop_exceeded : public convergence_error {
public:
    using convergence_error::convergence_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw domain_error(what);
}

}  // namespace detail
}  // namespace biodiv
