#pragma once

#include <string>

namespace propwatch::detail {

struct UrlParts {
    std::string origin;  ///< scheme://host[:port]
    std::string prefix;  ///< path prefix without trailing slash, may be empty
};

UrlParts split_url(const std::string& url);

}  // namespace propwatch::detail
