#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace treemg {

// Hierarchical byte-stream codec: values stored as m * 2^e with a one-byte
// exponent and a (bpa-1)-byte mantissa field whose top bit carries the sign.
struct CompressedStencil {
  int bpa = 0;  // 0 or 2..8 bytes per attribute
  std::vector<std::uint8_t> payload;
};

struct EncodedValue {
  std::int8_t e = 0;
  std::uint64_t m = 0;
  bool negative = false;
};

// nullopt when the exponent does not fit its byte (caller escalates bpa)
std::optional<EncodedValue> encodeValue(double x, int bpa);
double decodeValue(const EncodedValue& v, int bpa);

CompressedStencil encodeStencil(const std::vector<double>& values, double epsMf);
std::vector<double> decodeStencil(const CompressedStencil& c, int entryCount);

// difference to the geometric reference and its inverse
std::vector<double> hierarchize(const std::vector<double>& op, const std::vector<double>& ref);
std::vector<double> dehierarchize(const std::vector<double>& hat, const std::vector<double>& ref);

// three 3-bit bpa codes packed into 9 bits of a 16-bit field
std::uint16_t packBpaTags(int bpaA, int bpaP, int bpaR);
void unpackBpaTags(std::uint16_t tags, int& bpaA, int& bpaP, int& bpaR);

}  // namespace treemg
