#include "csmri/param_io.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

namespace csmri {

template <typename Real>
ptf::Record tensor_record(BasicTensor<Real> const &t)
{
  auto const s = t.shape();
  ptf::Record rec{{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                   static_cast<std::uint32_t>(s.w)},
                  ptf::DType::Real32,
                  {}};
  rec.payload.reserve(t.size());
  for (auto v : t.values()) {
    rec.payload.push_back(static_cast<float>(v));
  }
  return rec;
}

template <typename Real>
BasicTensor<Real> record_tensor(ptf::Record const &rec)
{
  if (rec.dtype != ptf::DType::Real32 || rec.dims.size() != 4) {
    throw std::runtime_error("expected a rank-4 real tensor record");
  }
  BasicTensor<Real> t({static_cast<int>(rec.dims[0]), static_cast<int>(rec.dims[1]), static_cast<int>(rec.dims[2]),
                       static_cast<int>(rec.dims[3])});
  for (std::size_t i = 0; i < t.size(); i++) {
    t[i] = static_cast<Real>(rec.payload[i]);
  }
  return t;
}

namespace {

std::string file_name(std::string const &tensor_name) { return tensor_name + ".ptf"; }

} // namespace

template <typename Real>
void save_network(Network<Real> &net, std::filesystem::path const &dir, KeyValues const &meta)
{
  std::filesystem::create_directories(dir);
  KeyValues manifest;
  for (auto const &[k, v] : parse_key_values(format_network_spec(net.spec()))) {
    manifest.emplace_back("spec." + k, v);
  }
  for (auto const &[k, v] : meta) {
    manifest.emplace_back("meta." + k, v);
  }
  for (auto const &slot : net.parameters()) {
    ptf::save(dir / file_name(slot.name), tensor_record(*slot.value));
    manifest.emplace_back(slot.name, file_name(slot.name));
  }
  for (auto const &slot : net.buffers()) {
    ptf::save(dir / file_name(slot.name), tensor_record(*slot.value));
    manifest.emplace_back(slot.name, file_name(slot.name));
  }
  std::ofstream os(dir / "manifest.txt");
  if (!os) {
    throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  }
  os << format_key_values(manifest);
}

template <typename Real>
Network<Real> load_network(std::filesystem::path const &manifest)
{
  auto const kv = read_key_values(manifest);
  std::string spec_text;
  std::map<std::string, std::string> files;
  for (auto const &[k, v] : kv) {
    if (k.starts_with("spec.")) {
      spec_text += k.substr(5) + "=" + v + "\n";
    } else if (!k.starts_with("meta.")) {
      files[k] = v;
    }
  }
  Network<Real> net(parse_network_spec(spec_text), 0);
  auto const dir = manifest.parent_path();
  auto const restore = [&](std::string const &name, BasicTensor<Real> &dst) {
    auto const it = files.find(name);
    if (it == files.end()) {
      throw std::runtime_error("manifest " + manifest.string() + " lacks tensor " + name);
    }
    auto t = record_tensor<Real>(ptf::load(dir / it->second));
    if (!(t.shape() == dst.shape())) {
      throw std::runtime_error("tensor " + name + " has shape " + t.shape().str() + ", network expects " +
                               dst.shape().str());
    }
    dst = std::move(t);
  };
  for (auto const &slot : net.parameters()) {
    restore(slot.name, *slot.value);
  }
  for (auto const &slot : net.buffers()) {
    restore(slot.name, *slot.value);
  }
  return net;
}

KeyValues manifest_meta(std::filesystem::path const &manifest)
{
  KeyValues out;
  for (auto const &[k, v] : read_key_values(manifest)) {
    if (k.starts_with("meta.")) {
      out.emplace_back(k.substr(5), v);
    }
  }
  return out;
}

template ptf::Record tensor_record(BasicTensor<float> const &);
template ptf::Record tensor_record(BasicTensor<double> const &);
template BasicTensor<float> record_tensor<float>(ptf::Record const &);
template BasicTensor<double> record_tensor<double>(ptf::Record const &);
template void save_network(Network<float> &, std::filesystem::path const &, KeyValues const &);
template void save_network(Network<double> &, std::filesystem::path const &, KeyValues const &);
template Network<float> load_network<float>(std::filesystem::path const &);
template Network<double> load_network<double>(std::filesystem::path const &);

} // namespace csmri
