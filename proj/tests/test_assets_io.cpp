#include "ncam/checkpoint.hpp"
#include "ncam/io/formats.hpp"
#include "ncam/io/manifest.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

using namespace ncam;

namespace {

std::vector<char> bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::string le_f32(float f) {
  std::string s(4, '\0');
  std::memcpy(s.data(), &f, 4);  // the test host is little-endian
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ncam_io_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

CheckpointFile sample_checkpoint() {
  CheckpointFile ck;
  ck.meta = {{"iteration", 12}, {"note", "x"}};
  ck.tensors.push_back({"a", {2, 3}, {1, 2, 3, 4, 5, -0.0f}});
  ck.tensors.push_back({"b", {}, {std::nanf("")}});
  ck.tensors.push_back({"empty", {0}, {}});
  return ck;
}

}  // namespace

TEST(Pfm, WireLayoutIsBottomUpLittleEndian) {
  ImageF img(1, 2);
  img.data = {1, 2, 3, 4, 5, 6};  // top row (1,2,3), bottom row (4,5,6)
  std::string expect = "PF\n1 2\n-1.0\n";
  for (float f : {4.f, 5.f, 6.f, 1.f, 2.f, 3.f}) expect += le_f32(f);
  EXPECT_EQ(encode_pfm(img), expect);
  EXPECT_EQ(decode_pfm(bytes(expect)), img);
}

TEST(Pfm, RoundTripThroughFile) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1e3f, 1e3f);
  ImageF img(7, 3);
  for (float& v : img.data) v = u(rng);
  img.data[0] = std::numeric_limits<float>::infinity();
  const auto path = scratch("pfm") / "a.pfm";
  write_pfm(path, img);
  EXPECT_EQ(read_pfm(path), img);
}

TEST(Pfm, Rejections) {
  EXPECT_THROW(decode_pfm(bytes("Pf\n1 1\n-1\n" + le_f32(1))), FormatError);
  EXPECT_THROW(decode_pfm(bytes("P6\n1 1\n-1\n")), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n1 1\n1\n" + std::string(12, '\0'))), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n1 1\n-1\n" + std::string(11, '\0'))), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n1 1\n-1\n" + std::string(13, '\0'))), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n0 1\n-1\n")), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n1 x\n-1\n")), FormatError);
  EXPECT_THROW(decode_pfm(bytes("PF\n1")), FormatError);
  EXPECT_THROW(read_pfm(scratch("pfm_missing") / "nope.pfm"), std::exception);
}

TEST(Ldr, RoundTripAndCommentsInHeader) {
  Image8 img(3, 2);
  for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = static_cast<std::uint8_t>(k * 13);
  EXPECT_EQ(decode_ldr(bytes(encode_ldr(img))), img);
  std::string commented = "P6 # made by hand\n3 2\n# max\n255\n";
  commented.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  EXPECT_EQ(decode_ldr(bytes(commented)), img);
  const auto path = scratch("ldr") / "a.ppm";
  write_ldr(path, img);
  EXPECT_EQ(read_ldr(path), img);
}

TEST(Ldr, Rejections) {
  EXPECT_THROW(decode_ldr(bytes("P3\n1 1\n255\n0 0 0")), FormatError);
  EXPECT_THROW(decode_ldr(bytes("P6\n1 1\n65535\n" + std::string(6, '\0'))), FormatError);
  EXPECT_THROW(decode_ldr(bytes("P6\n1 1\n255\n" + std::string(2, '\0'))), FormatError);
  EXPECT_THROW(decode_ldr(bytes("P6\n1 1\n255\n" + std::string(4, '\0'))), FormatError);
  EXPECT_THROW(encode_ldr(Image8(1, 1, 1)), FormatError);
}

TEST(Quantize, RoundHalfUpAndClip) {
  EXPECT_EQ(quantize(-0.5), 0);
  EXPECT_EQ(quantize(2.0), 255);
  EXPECT_EQ(quantize(0.5), 128);  // 127.5 rounds up
  EXPECT_EQ(quantize(1.0 / 255.0), 1);
  Image8 img(1, 1);
  img.data = {0, 128, 255};
  const ImageF r = to_real(img);
  EXPECT_EQ(r.data[0], 0.f);
  EXPECT_EQ(r.data[2], 1.f);
  EXPECT_EQ(quantize(r), img);
}

TEST(Flo, WireLayoutAndRoundTrip) {
  FlowField f(2, 1);
  f.uv = {0.5f, -1.f, 2.f, 3.25f};
  std::string expect = le_f32(202021.25f);
  expect += std::string("\x02\0\0\0\x01\0\0\0", 8);
  for (float v : f.uv) expect += le_f32(v);
  EXPECT_EQ(encode_flo(f), expect);
  EXPECT_EQ(decode_flo(bytes(expect)), f);
  const auto path = scratch("flo") / "a.flo";
  write_flo(path, f);
  EXPECT_EQ(read_flo(path), f);
}

TEST(Flo, Rejections) {
  FlowField f(2, 2, 1.f, 1.f);
  const std::string good = encode_flo(f);
  std::string bad_magic = good;
  bad_magic[0] ^= 1;
  EXPECT_THROW(decode_flo(bytes(bad_magic)), FormatError);
  EXPECT_THROW(decode_flo(bytes(good.substr(0, good.size() - 1))), FormatError);
  EXPECT_THROW(decode_flo(bytes(good + "x")), FormatError);
  EXPECT_THROW(decode_flo(bytes(good.substr(0, 8))), FormatError);
  FlowField broken(2, 2);
  broken.uv.pop_back();
  EXPECT_THROW(encode_flo(broken), FormatError);
}

TEST(Manifest, ParseResolveAndRoundTrip) {
  const auto dir = scratch("manifest");
  write_ldr(dir / "a.ppm", Image8(2, 2));
  write_ldr(dir / "b.ppm", Image8(2, 2));
  write_flo(dir / "f.flo", FlowField(2, 2));
  const nlohmann::json j = {{"version", 1},
                            {"width", 2},
                            {"height", 2},
                            {"images",
                             {{{"path", "a.ppm"}, {"ev", -1.0}, {"flow_to_next", "f.flo"}, {"focus", "near"}},
                              {{"path", "b.ppm"}, {"exposure_seconds", 0.25}}}}};
  std::ofstream(dir / "manifest.json") << j.dump();
  const SceneManifest m = read_manifest(dir / "manifest.json");
  ASSERT_EQ(m.images.size(), 2u);
  EXPECT_EQ(m.images[0].log2_dt(), -1.0);
  EXPECT_EQ(m.images[1].log2_dt(), -2.0);
  EXPECT_EQ(m.images[0].focus, "near");
  EXPECT_EQ(m.resolve("a.ppm"), dir / "a.ppm");
  EXPECT_EQ(m.exposure_mode, "known");
  write_manifest(dir / "again.json", m);
  EXPECT_EQ(to_json(read_manifest(dir / "again.json")), to_json(m));
}

TEST(Manifest, Rejections) {
  const nlohmann::json base = {{"version", 1}, {"width", 2}, {"height", 2}, {"images", {{{"path", "a.ppm"}, {"ev", 0}}}}};
  EXPECT_NO_THROW(manifest_from_json(base, "."));
  auto with = [&](const char* key, nlohmann::json v) {
    nlohmann::json j = base;
    j[key] = std::move(v);
    return j;
  };
  EXPECT_THROW(manifest_from_json(with("version", 2), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("width", 0), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("images", nlohmann::json::array()), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("exposure_mode", "auto"), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("images", {{{"path", "a"}}}), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("images", {{{"path", "a"}, {"ev", 0}, {"exposure_seconds", 1}}}), "."),
               ManifestError);
  EXPECT_THROW(manifest_from_json(with("images", {{{"path", "a"}, {"exposure_seconds", -1}}}), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(with("height", "tall"), "."), ManifestError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::array(), "."), ManifestError);

  const auto dir = scratch("manifest_bad");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(read_manifest(dir / "broken.json"), ManifestError);
  std::ofstream(dir / "missing.json") << base.dump();
  EXPECT_THROW(read_manifest(dir / "missing.json"), ManifestError);
  EXPECT_THROW(read_manifest(dir / "absent.json"), ManifestError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const CheckpointFile ck = sample_checkpoint();
  const std::string enc = encode_checkpoint(ck);
  EXPECT_EQ(enc.substr(0, 8), "NCAM0001");
  const CheckpointFile back = decode_checkpoint(bytes(enc));
  EXPECT_EQ(back.meta, ck.meta);
  EXPECT_EQ(back.tensors, ck.tensors);
  EXPECT_EQ(encode_checkpoint(back), enc);
  const auto path = scratch("ckpt") / "m.ckpt";
  write_checkpoint_file(path, ck);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_EQ(read_checkpoint_file(path).tensors, ck.tensors);
  EXPECT_EQ(back.find("a").dims, (std::vector<std::uint64_t>{2, 3}));
  EXPECT_THROW(back.find("zzz"), FormatError);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const std::string enc = encode_checkpoint(sample_checkpoint());
  for (std::size_t n = 0; n < enc.size(); ++n) {
    EXPECT_THROW(decode_checkpoint(bytes(enc.substr(0, n))), FormatError) << n;
  }
  EXPECT_THROW(decode_checkpoint(bytes(enc + '\0')), FormatError);
}

TEST(Checkpoint, CorruptHeadersAreRejected) {
  const std::string enc = encode_checkpoint(sample_checkpoint());
  std::string magic = enc;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes(magic)), FormatError);
  std::string version = enc;
  version[7] = '9';
  EXPECT_THROW(decode_checkpoint(bytes(version)), FormatError);
  std::string meta = enc;
  meta[16] = '!';  // first metadata byte
  EXPECT_THROW(decode_checkpoint(bytes(meta)), FormatError);
  std::string huge = enc;
  huge[15] = '\x7f';  // metadata length far beyond the file
  EXPECT_THROW(decode_checkpoint(bytes(huge)), FormatError);
  CheckpointFile bad;
  bad.tensors.push_back({"x", {2}, {1.f}});
  EXPECT_THROW(encode_checkpoint(bad), FormatError);
}
