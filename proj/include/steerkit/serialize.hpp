#pragma once

#include <filesystem>

#include "steerkit/adam.hpp"
#include "steerkit/model.hpp"

namespace steerkit {

// Weights file: binary, little-endian. Magic "LNW1", u16 format version,
// u32 record count, then per record: u16 name length + UTF-8 name, u8 rank,
// u32 extents, raw 32-bit float data (rank-0 records carry no data and act
// as structural markers), and a trailing CRC32 of all preceding bytes.
//
// Record names encode the layer chain: "input,C,H,W", then one
// "<i>,<kind>[,params]" marker per layer plus "<i>,weight" / "<i>,bias"
// tensors where the layer has parameters. A checkpoint is the same container
// with an "ADAM,..." section (moment tensors named "<i>,weight,m" etc.) and
// an "EPOCH,<k>" marker appended.

void save_weights(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_weights(const std::filesystem::path& path);

struct Checkpoint {
  Network<float> net;
  AdamState<float> adam;
  int epoch = 0;  // last completed epoch
};

void save_checkpoint(const Network<float>& net, const AdamState<float>& adam, int epoch,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shortest decimal form that parses back to exactly the same value.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace steerkit
