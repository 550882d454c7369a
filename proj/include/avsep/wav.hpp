// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/dsp.hpp"

#include <string>

namespace avsep {

// RIFF/WAVE, PCM 16-bit little-endian, mono, 16 kHz. Anything else is
// rejected with a diagnostic naming the offending field.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace avsep
