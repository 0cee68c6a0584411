#include "visfuse/binary_io.hpp"

#include "visfuse/error.hpp"

namespace visfuse::io {

void expect_magic(std::istream& is, const char (&expected)[5], const std::string& path) {
  char tag[4] = {};
  is.read(tag, 4);
  if (!is || std::memcmp(tag, expected, 4) != 0) {
    throw IoError(path, std::string("bad magic, expected ") + expected);
  }
}

void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

}  // namespace visfuse::io
