#include "mtf/model.hpp"

#include <fstream>

#include "mtf/core/error.hpp"

namespace mtf {

namespace {

std::variant<Network<float>, Network<double>> make_net(const NetworkSpec& spec, std::uint64_t seed, int precision) {
  if (precision == 4) return Network<float>(spec, seed);
  if (precision == 8) return Network<double>(spec, seed);
  throw ConfigError("model precision must be 4 or 8 bytes per scalar");
}

}  // namespace

Model::Model(const NetworkSpec& spec, std::uint64_t seed, int precision) : net_(make_net(spec, seed, precision)) {}

Model Model::from_checkpoint(const Checkpoint& ck) {
  Model m(parse_network_spec(ck.spec_text), 0, ck.precision);
  std::visit([&](auto& n) { n.load(ck); }, m.net_);
  return m;
}

Model Model::load(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

std::string Model::encode() const {
  return std::visit(
      [](const auto& n) {
        using T = std::remove_cvref_t<decltype(n.parameters()[0].value[0])>;
        return encode_checkpoint<T>(to_text(n.spec()), n.parameters());
      },
      net_);
}

void Model::save(const std::filesystem::path& path) const {
  // Write-then-rename, so a crash never leaves a truncated checkpoint.
  const std::string bytes = encode();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

const NetworkSpec& Model::spec() const {
  return std::visit([](const auto& n) -> const NetworkSpec& { return n.spec(); }, net_);
}

PredictionRecord Model::predict(const Tensor<float>& crop) const {
  return std::visit(
      [&](const auto& n) {
        using T = std::remove_cvref_t<decltype(n.parameters()[0].value[0])>;
        Tape<T> tape(false);
        const Tensor<float>* one = &crop;
        Var x = tape.constant(make_input_batch<T>(std::span<const Tensor<float>>(one, 1)));
        const Heads h = n.forward(tape, x);
        return decode_predictions(tape, h, n.spec().landmarks).front();
      },
      net_);
}

}  // namespace mtf
