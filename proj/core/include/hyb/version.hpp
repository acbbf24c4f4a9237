#pragma once

namespace hyb {

// Static version string stamped into manifests and checkpoints.
// Deliberately not derived from build time: artifacts must be
// byte-identical across rebuilds.
const char* version_string();

}  // namespace hyb
