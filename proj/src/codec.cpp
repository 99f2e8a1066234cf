#include "treemg/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace treemg {

namespace {
inline int mantissaBits(int bpa) { return 8 * (bpa - 1) - 1; }
}

std::optional<EncodedValue> encodeValue(double x, int bpa) {
  EncodedValue v;
  if (x == 0.0) return v;
  const int B = mantissaBits(bpa);
  v.negative = std::signbit(x);
  const double ax = std::abs(x);
  int E = 0;
  std::frexp(ax, &E);  // ax = f * 2^E, f in [0.5, 1)
  long e = long(E) - B;
  double m = std::nearbyint(std::ldexp(ax, -int(e)));
  if (m >= std::ldexp(1.0, B)) {  // rounding crossed the normalization bound
    e += 1;
    m = std::nearbyint(std::ldexp(ax, -int(e)));
  }
  if (e < -128) {  // value far below representable granularity; degrade gracefully
    e = -128;
    m = std::nearbyint(std::ldexp(ax, 128));
  }
  if (e > 127) return std::nullopt;
  v.e = std::int8_t(e);
  v.m = std::uint64_t(m);
  return v;
}

double decodeValue(const EncodedValue& v, int bpa) {
  (void)bpa;
  if (v.m == 0) return v.negative ? -0.0 : 0.0;
  const double x = std::ldexp(double(v.m), v.e);
  return v.negative ? -x : x;
}

CompressedStencil encodeStencil(const std::vector<double>& values, double epsMf) {
  CompressedStencil out;
  bool allSmall = true;
  for (double v : values)
    if (std::abs(v) > epsMf) allSmall = false;
  if (allSmall) return out;  // bpa = 0, no payload

  for (int bpa = 2; bpa <= 8; ++bpa) {
    std::vector<EncodedValue> enc(values.size());
    bool fits = true;
    for (std::size_t k = 0; k < values.size() && fits; ++k) {
      auto e = encodeValue(values[k], bpa);
      if (!e) {
        fits = false;
        break;
      }
      enc[k] = *e;
      if (std::abs(decodeValue(*e, bpa) - values[k]) > epsMf) fits = false;
    }
    if (!fits && bpa < 8) continue;
    if (!fits) throw std::runtime_error("encodeStencil: value out of representable range");
    out.bpa = bpa;
    out.payload.reserve(values.size() * bpa);
    const int B = mantissaBits(bpa);
    for (const auto& e : enc) {
      out.payload.push_back(std::uint8_t(e.e));
      std::uint64_t field = e.m | (std::uint64_t(e.negative ? 1 : 0) << B);
      for (int byte = 0; byte < bpa - 1; ++byte) {
        out.payload.push_back(std::uint8_t(field & 0xff));
        field >>= 8;
      }
    }
    return out;
  }
  throw std::runtime_error("encodeStencil: unreachable");
}

std::vector<double> decodeStencil(const CompressedStencil& c, int entryCount) {
  std::vector<double> out(entryCount, 0.0);
  if (c.bpa == 0) return out;
  if (int(c.payload.size()) != entryCount * c.bpa)
    throw std::runtime_error("decodeStencil: malformed payload length");
  const int B = mantissaBits(c.bpa);
  std::size_t pos = 0;
  for (int k = 0; k < entryCount; ++k) {
    EncodedValue v;
    v.e = std::int8_t(c.payload[pos++]);
    std::uint64_t field = 0;
    for (int byte = 0; byte < c.bpa - 1; ++byte)
      field |= std::uint64_t(c.payload[pos++]) << (8 * byte);
    v.negative = (field >> B) & 1;
    v.m = field & ((std::uint64_t(1) << B) - 1);
    out[k] = decodeValue(v, c.bpa);
  }
  return out;
}

std::vector<double> hierarchize(const std::vector<double>& op, const std::vector<double>& ref) {
  std::vector<double> out(op.size());
  for (std::size_t k = 0; k < op.size(); ++k) out[k] = op[k] - ref[k];
  return out;
}

std::vector<double> dehierarchize(const std::vector<double>& hat, const std::vector<double>& ref) {
  std::vector<double> out(hat.size());
  for (std::size_t k = 0; k < hat.size(); ++k) out[k] = hat[k] + ref[k];
  return out;
}

std::uint16_t packBpaTags(int bpaA, int bpaP, int bpaR) {
  auto code = [](int bpa) { return std::uint16_t(bpa == 0 ? 0 : bpa - 1); };
  return std::uint16_t(code(bpaA) | (code(bpaP) << 3) | (code(bpaR) << 6));
}

void unpackBpaTags(std::uint16_t tags, int& bpaA, int& bpaP, int& bpaR) {
  auto bpa = [](int code) { return code == 0 ? 0 : code + 1; };
  bpaA = bpa(tags & 7);
  bpaP = bpa((tags >> 3) & 7);
  bpaR = bpa((tags >> 6) & 7);
}

}  // namespace treemg
