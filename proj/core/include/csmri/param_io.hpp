#pragma once

#include "csmri/keyvalue.hpp"
#include "csmri/ptf.hpp"
#include "csmri/unet.hpp"

#include <filesystem>

namespace csmri {

template <typename Real>
ptf::Record tensor_record(BasicTensor<Real> const &t);

template <typename Real>
BasicTensor<Real> record_tensor(ptf::Record const &rec);

// Writes one PTF file per parameter and BN buffer into dir, plus dir/manifest.txt:
//   spec.<key>=<value>      network spec
//   meta.<key>=<value>      caller metadata
//   <tensor name>=<file>    one line per tensor
template <typename Real>
void save_network(Network<Real> &net, std::filesystem::path const &dir, KeyValues const &meta = {});

template <typename Real>
Network<Real> load_network(std::filesystem::path const &manifest);

// The meta.* entries of a manifest with the prefix stripped.
KeyValues manifest_meta(std::filesystem::path const &manifest);

} // namespace csmri
