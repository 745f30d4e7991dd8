#include "circlesnake/error.hpp"

namespace csnake {

const char* kind_name(Error::Kind kind) noexcept {
    switch (kind) {
    case Error::Kind::CoordinateRange: return "coordinate-range";
    case Error::Kind::Evaluation: return "evaluation";
    case Error::Kind::Annotation: return "annotation";
    case Error::Kind::Domain: return "domain";
    case Error::Kind::Shape: return "shape";
    case Error::Kind::Geometry: return "geometry";
    case Error::Kind::Schema: return "schema";
    case Error::Kind::Integrity: return "integrity";
    case Error::Kind::Sizing: return "sizing";
    case Error::Kind::Export: return "export";
    case Error::Kind::DegenerateInput: return "degenerate-input";
    case Error::Kind::Aggregation: return "aggregation";
    case Error::Kind::Generation: return "generation";
    case Error::Kind::Training: return "training";
    case Error::Kind::Usage: return "usage";
    case Error::Kind::Io: return "io";
    }
    return "unknown";
}

} // namespace csnake
