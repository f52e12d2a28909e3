#include "kdvb/field_io.hpp"

#include "kdvb/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace kdvb {

namespace {

template <class T> T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <class T> void put(std::ostream &os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T> T get(std::istream &is) {
  T v{};
  is.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!is)
    throw InvalidArgument("truncated binary field");
  return to_little(v);
}

std::ofstream open_out(const std::string &path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os)
    throw InvalidArgument("cannot open '" + path + "' for writing");
  return os;
}

} // namespace

void write_field_csv(std::ostream &os, const Field &f, const SpatialGrid &g,
                     const TimeGrid &tg) {
  if (!f.matches(g, tg))
    throw InvalidArgument("field shape does not match grids");
  os << "t,x,value\n" << std::setprecision(17);
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector u = f.with_boundary(n);
    for (int i = 0; i <= g.cells; ++i)
      os << tg.time(n) << ',' << g.node(i) << ',' << u[i] << '\n';
  }
}

void write_field_csv(const std::string &path, const Field &f,
                     const SpatialGrid &g, const TimeGrid &tg) {
  auto os = open_out(path, false);
  write_field_csv(os, f, g, tg);
}

void write_field_binary(std::ostream &os, const Field &f) {
  put<std::int64_t>(os, f.levels());
  put<std::int64_t>(os, f.interior() + 2);
  for (int n = 0; n < f.levels(); ++n) {
    const Vector u = f.with_boundary(n);
    for (int i = 0; i < u.size(); ++i)
      put<double>(os, u[i]);
  }
}

void write_field_binary(const std::string &path, const Field &f) {
  auto os = open_out(path, true);
  write_field_binary(os, f);
}

Field read_field_binary(std::istream &is) {
  const auto levels = get<std::int64_t>(is);
  const auto nodes = get<std::int64_t>(is);
  if (levels < 1 || nodes < 3)
    throw InvalidArgument("binary field has invalid dimensions");
  FieldData d(levels, nodes - 2);
  for (std::int64_t n = 0; n < levels; ++n)
    for (std::int64_t i = 0; i < nodes; ++i) {
      const double v = get<double>(is);
      if (i > 0 && i < nodes - 1)
        d(n, i - 1) = v;
    }
  return Field(std::move(d));
}

Field read_field_binary(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw InvalidArgument("cannot open '" + path + "'");
  return read_field_binary(is);
}

} // namespace kdvb
