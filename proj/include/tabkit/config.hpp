#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tabkit {

// Table space designs. CS (the or-parallel design) exists only in the
// analytic memory model, never as a runtime option.
enum class Design : uint8_t { NS, SS, FS, PAS, PAC };

enum class Scheduling : uint8_t { Local, Batched };

// Hash mechanism installed on a saturated trie level.
enum class HashScheme : uint8_t { HashTrie, Doubling };

const char* to_string(Design d);
const char* to_string(Scheduling s);
const char* to_string(HashScheme s);
bool design_from_string(const std::string& s, Design& out);
bool scheduling_from_string(const std::string& s, Scheduling& out);
bool scheme_from_string(const std::string& s, HashScheme& out);

// Hard ceiling on simultaneously running worker threads.
inline constexpr unsigned kThreadCeiling = 1024;

// Bucket array geometry: a small direct part plus on-demand groups.
inline constexpr unsigned kBucketDirect = 8;
inline constexpr unsigned kBucketGroupSize = 32;
inline constexpr unsigned kBucketGroups =
    (kThreadCeiling - kBucketDirect + kBucketGroupSize - 1) / kBucketGroupSize;

struct TrieConfig {
  unsigned saturation_threshold = 8;  // chain length that installs a hash level
  unsigned initial_buckets = 8;       // S for the doubling scheme
  unsigned hash_bits = 3;             // w; hash-trie arrays hold 2^w entries
  HashScheme scheme = HashScheme::HashTrie;
};

struct AllocConfig {
  size_t page_payload = 4096;
  bool debug_accounting = false;
  unsigned max_threads = 64;  // heaps provisioned (workers + main)
};

// Registered block sizes, in bytes. These are both the allocator block
// sizes and the symbol values fed to the analytic memory model, so the
// model and the measured census share one counting convention.
struct StructSizes {
  uint64_t te = 64;       // table entry
  uint64_t ba = 320;      // bucket array (direct part)
  uint64_t ba_group = 256;  // indirect bucket group
  uint64_t sf = 96;       // subgoal frame (NS/SS/PAS)
  uint64_t se_fs = 56;    // shared subgoal entry (FS/PAC)
  uint64_t sf_fs = 40;    // private remainder of the split frame
  uint64_t bp = 8;        // back pointer inside the split frame
  uint64_t trie_node = 40;
  uint64_t chain_cell = 16;
  uint64_t hash_array = 64;
  uint64_t answer_chain_node = 16;
};

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed term / program input.
struct structural_error : error {
  using error::error;
};
// API precondition broken by the caller.
struct contract_error : error {
  using error::error;
};
// Host memory exhausted.
struct resource_error : error {
  using error::error;
};
// Unsupported configuration (e.g. FS with batched scheduling).
struct config_error : error {
  using error::error;
};
struct parse_error : structural_error {
  using structural_error::structural_error;
};

}  // namespace tabkit
