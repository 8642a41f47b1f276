#ifndef UNIRIG_ERRORS_HPP
#define UNIRIG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace unirig {

// Base class for all toolkit errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A branch map whose derivative vanishes on its domain.
struct singular_branch_error : error {
    using error::error;
};

// A map that fails the diffeomorphism requirements (endpoints, positive derivative).
struct not_a_diffeo_error : error {
    using error::error;
};

// Derivative or Schwarzian query at a point where it is undefined.
struct critical_point_error : error {
    using error::error;
};

// f^2(0) >= f(0): the attractor interval degenerates.
struct degenerate_attractor_error : error {
    using error::error;
};

// A root or fixed-point solve did not reach its residual target.
struct convergence_error : error {
    using error::error;
};

// A symbolic word with empty pullback under the current branch truncation.
struct unrealized_word_error : error {
    using error::error;
};

// No admissible periodic window around the requested center.
struct window_not_found_error : error {
    using error::error;
};

// A bounded search (monotone-onto, good intervals) ran out of budget.
struct search_exhausted_error : error {
    using error::error;
};

// Two maps whose symbolic structures do not match where they must.
struct structural_mismatch_error : error {
    using error::error;
};

// A pipeline construction step produced an invalid object.
struct construction_error : error {
    using error::error;
};

// Malformed input file; message names the offending field.
struct parse_error : error {
    using error::error;
};

} // namespace unirig

#endif
