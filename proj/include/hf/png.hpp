#pragma once

#include <string>

#include "hf/render.hpp"

namespace hf {

// Minimal PNG writer: 8-bit RGB, zlib stream with stored deflate blocks.
// Values are written as round(255*clamp(x,0,1)); output is byte-deterministic.
void write_png(const std::string& path, const Image& img);

std::vector<unsigned char> encode_png(const Image& img);

}  // namespace hf
