#pragma once

#include <stdexcept>
#include <string>

namespace kraichnan {

// stiffness, solver non-convergence, step-size underflow
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// an inequality the theory guarantees came out false
class CertificateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kraichnan
