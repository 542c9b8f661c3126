#include "ablasim/grid/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace ablasim::grid {

namespace {

static_assert(std::endian::native == std::endian::little, "field files assume a little-endian host");

constexpr char kMaskMagic[] = "GSMASK1";  // 7 bytes on disk
constexpr char kFieldMagic[] = "GSFLD1";  // 6 bytes on disk

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated header");
  return v;
}

void put_grid(std::ostream& out, const VoxelGrid& g) {
  for (int d : g.dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<double>(out, g.spacing());
  put<double>(out, g.origin().x);
  put<double>(out, g.origin().y);
  put<double>(out, g.origin().z);
}

VoxelGrid get_grid(std::istream& in) {
  std::array<int, 3> dims{};
  for (int& d : dims) d = static_cast<int>(get<std::uint32_t>(in));
  double h = get<double>(in);
  Vec3 o{get<double>(in), get<double>(in), get<double>(in)};
  try {
    return VoxelGrid(dims, h, o);
  } catch (const Error& e) {
    throw FormatError(std::string("bad grid header: ") + e.what());
  }
}

void expect_magic(std::istream& in, const char* magic) {
  std::size_t n = std::strlen(magic);
  std::string buf(n, '\0');
  if (!in.read(buf.data(), static_cast<std::streamsize>(n)) || buf != magic)
    throw FormatError(std::string("missing ") + magic + " header");
}

template <class Fn>
void with_file(const std::filesystem::path& p, std::ios::openmode mode, Fn fn) {
  std::fstream f(p, mode | std::ios::binary);
  if (!f) throw Error("cannot open " + p.string());
  fn(f);
}

}  // namespace

void write_mask(std::ostream& out, const Mask& mask) {
  out.write(kMaskMagic, 7);
  put_grid(out, mask.grid);
  std::vector<std::uint8_t> packed((mask.bits.size() + 7) / 8, 0);
  for (std::size_t n = 0; n < mask.bits.size(); ++n)
    if (mask.bits[n]) packed[n / 8] |= static_cast<std::uint8_t>(1u << (n % 8));
  out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

Mask read_mask(std::istream& in) {
  expect_magic(in, kMaskMagic);
  Mask m(get_grid(in));
  std::vector<std::uint8_t> packed((m.bits.size() + 7) / 8, 0);
  if (!in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size())))
    throw FormatError("truncated mask payload");
  for (std::size_t n = 0; n < m.bits.size(); ++n) m.bits[n] = (packed[n / 8] >> (n % 8)) & 1u;
  return m;
}

void save_mask(const std::filesystem::path& path, const Mask& mask) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_mask(f, mask); });
}

Mask load_mask(const std::filesystem::path& path) {
  Mask m;
  with_file(path, std::ios::in, [&](std::fstream& f) { m = read_mask(f); });
  return m;
}

void write_components(std::ostream& out, const VoxelGrid& grid, Quantity q, std::uint32_t components,
                      const std::vector<double>& interleaved) {
  if (interleaved.size() != grid.size() * components) throw Error("field size does not match grid");
  out.write(kFieldMagic, 6);
  put_grid(out, grid);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(q));
  put<std::uint32_t>(out, components);
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size() * sizeof(double)));
}

void write_field(std::ostream& out, const ScalarField& field) {
  write_components(out, field.grid, field.quantity, 1, field.values);
}

ScalarField read_field(std::istream& in) {
  expect_magic(in, kFieldMagic);
  ScalarField f(get_grid(in));
  f.quantity = static_cast<Quantity>(get<std::uint32_t>(in));
  auto comps = get<std::uint32_t>(in);
  if (comps != 1) throw FormatError("expected a single-component field");
  if (!in.read(reinterpret_cast<char*>(f.values.data()),
               static_cast<std::streamsize>(f.values.size() * sizeof(double))))
    throw FormatError("truncated field payload");
  return f;
}

void save_field(const std::filesystem::path& path, const ScalarField& field) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_field(f, field); });
}

ScalarField load_field(const std::filesystem::path& path) {
  ScalarField out;
  with_file(path, std::ios::in, [&](std::fstream& f) { out = read_field(f); });
  return out;
}

void save_vtk(const std::filesystem::path& path, const ScalarField& field, const std::string& name) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  const auto& g = field.grid;
  f << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  f << "DIMENSIONS " << g.nx() << ' ' << g.ny() << ' ' << g.nz() << '\n';
  f << std::setprecision(17);
  f << "ORIGIN " << g.origin().x << ' ' << g.origin().y << ' ' << g.origin().z << '\n';
  f << "SPACING " << g.spacing() << ' ' << g.spacing() << ' ' << g.spacing() << '\n';
  f << "POINT_DATA " << g.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
  for (double v : field.values) f << v << '\n';
}

}  // namespace ablasim::grid
