#include "metagrad/rng.hpp"

#include <sstream>

#include "metagrad/errors.hpp"

namespace metagrad {

std::string Rng::serialize_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw IoError("Rng: malformed serialized state");
}

} // namespace metagrad
