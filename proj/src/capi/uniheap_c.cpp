#include "uniheap/uniheap.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "ctl/info.hpp"
#include "ctl/verify.hpp"
#include "object/unitype.hpp"
#include "upl/session.hpp"

struct uh_session {
  std::unique_ptr<uniheap::Session> s;
};

struct uh_tx {
  uh_session* owner = nullptr;
  std::unique_ptr<uniheap::Transaction> t;
};

namespace {

using uniheap::ErrorCode;

thread_local std::string t_last_error;

uh_status fail_with(uh_status status, std::string message) {
  t_last_error = std::move(message);
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
uh_status guarded(Fn&& fn) noexcept {
  try {
    t_last_error.clear();
    return fn();
  } catch (const uniheap::Error& e) {
    return fail_with(static_cast<uh_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(UH_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(UH_INTERNAL, e.what());
  } catch (...) {
    return fail_with(UH_INTERNAL, "unknown exception");
  }
}

uniheap::HeapOptions to_options(const uh_open_options* o) {
  uniheap::HeapOptions opts;
  if (!o) return opts;
  opts.read_only = o->read_only != 0;
  opts.force_lock = o->force_lock != 0;
  opts.auto_gc = o->auto_gc != 0;
  opts.commit_mode = o->per_write_fencing ? uniheap::CommitMode::kPerWrite : uniheap::CommitMode::kDurable;
  return opts;
}

uniheap::UniType to_type(std::uint32_t tag) {
  if (tag > 0xff || !uniheap::is_valid_type_tag(static_cast<std::uint8_t>(tag)))
    uniheap::fail(ErrorCode::kInvalidArgument, "invalid type tag " + std::to_string(tag));
  return static_cast<uniheap::UniType>(tag);
}

uniheap::Value to_value(uh_value v) { return uniheap::Value::from_bits(to_type(v.type), v.bits); }

uh_value from_value(uniheap::Value v) { return {static_cast<std::uint32_t>(v.type()), v.bits()}; }

void require(const void* p, const char* what) {
  if (!p) uniheap::fail(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

uniheap::Session& session_of(uh_session* s) {
  require(s, "session");
  return *s->s;
}

uniheap::Transaction& tx_of(uh_tx* tx) {
  require(tx, "transaction");
  if (!tx->t) uniheap::fail(ErrorCode::kTxNotActive, "transaction already ended");
  return *tx->t;
}

const uniheap::Plass& plass_of_id(uniheap::Session& s, std::uint32_t id) {
  const auto* p = s.plass(id);
  if (!p) uniheap::fail(ErrorCode::kUnknownPlass, "plass " + std::to_string(id));
  return *p;
}

char* dup_string(const std::string& text) {
  auto* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

uh_session* wrap(std::unique_ptr<uniheap::Session> s) {
  auto* h = new uh_session;
  h->s = std::move(s);
  return h;
}

}  // namespace

extern "C" {

const char* uh_status_name(uh_status status) {
  switch (status) {
    case UH_CONFLICT_RETRY: return "ConflictRetry";
    case UH_INTERNAL: return "Internal";
    default: break;
  }
  if (status < UH_OK || status > UH_CRASH_INJECTED) return "Unknown";
  return uniheap::error_name(static_cast<ErrorCode>(status)).data();
}

const char* uh_last_error_message(void) { return t_last_error.c_str(); }

void uh_default_options(uh_open_options* out) {
  if (!out) return;
  *out = uh_open_options{};
  out->auto_gc = 1;
}

uh_status uh_create(const char* path, uint64_t capacity, const char* name, int force, const uh_open_options* opts,
                    uh_session** out) {
  return guarded([&] {
    require(path, "path");
    require(name, "name");
    require(out, "out");
    *out = wrap(uniheap::Session::create(path, capacity, name, {}, force != 0, to_options(opts)));
    return UH_OK;
  });
}

uh_status uh_create_in_memory(uint64_t capacity, const char* name, const uh_open_options* opts, uh_session** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    auto dev = uniheap::pmem::SimulatedNvm::create_in_memory(capacity);
    *out = wrap(uniheap::Session::create_on(std::move(dev), name, {}, false, to_options(opts)));
    return UH_OK;
  });
}

uh_status uh_open(const char* path, const uh_open_options* opts, uh_session** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = wrap(uniheap::Session::open(path, to_options(opts)));
    return UH_OK;
  });
}

uh_status uh_close(uh_session* session) {
  if (!session) return UH_OK;
  const uh_status st = guarded([&] {
    session->s->close();
    return UH_OK;
  });
  delete session;
  return st;
}

uh_status uh_recovery_info(uh_session* session, uh_recovery_report* out) {
  return guarded([&] {
    require(out, "out");
    const auto& r = session_of(session).recovery();
    out->replayed_txs = r.replayed_txs;
    out->discarded_entries = r.discarded_entries;
    out->gc_redone = r.gc_redone ? 1 : 0;
    return UH_OK;
  });
}

uh_status uh_atomic_begin(uh_session* session, uh_tx** out) {
  return guarded([&] {
    require(out, "out");
    auto t = session_of(session).atomic_begin();
    auto* h = new uh_tx;
    h->owner = session;
    h->t = std::move(t);
    *out = h;
    return UH_OK;
  });
}

uh_status uh_atomic_end(uh_tx* tx) {
  return guarded([&] {
    const auto r = tx_of(tx).commit();
    return r == uniheap::CommitResult::kCommitted ? UH_OK : UH_CONFLICT_RETRY;
  });
}

uh_status uh_abort(uh_tx* tx) {
  return guarded([&] {
    tx_of(tx).abort();
    return UH_OK;
  });
}

void uh_tx_free(uh_tx* tx) {
  if (!tx) return;
  guarded([&] {
    tx->t.reset();
    return UH_OK;
  });
  delete tx;
}

uh_status uh_tx_id(uh_tx* tx, uint64_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = tx_of(tx).id();
    return UH_OK;
  });
}

uh_status uh_alloc_obj(uh_tx* tx, uint32_t plass, uh_ref* out) {
  return guarded([&] {
    require(out, "out");
    *out = tx_of(tx).alloc(plass).id;
    return UH_OK;
  });
}

uh_status uh_alloc_array(uh_tx* tx, uint32_t array_plass, uint64_t length, uh_ref* out) {
  return guarded([&] {
    require(out, "out");
    *out = tx_of(tx).alloc(array_plass, length).id;
    return UH_OK;
  });
}

uh_status uh_tx_read_field(uh_tx* tx, uh_ref ref, uint32_t field, uh_value* out) {
  return guarded([&] {
    require(out, "out");
    *out = from_value(tx_of(tx).read(uniheap::ObjectRef{ref}, field));
    return UH_OK;
  });
}

uh_status uh_write_field(uh_tx* tx, uh_ref ref, uint32_t field, uh_value value) {
  return guarded([&] {
    tx_of(tx).write(uniheap::ObjectRef{ref}, field, to_value(value));
    return UH_OK;
  });
}

uh_status uh_tx_set_root(uh_tx* tx, const char* name, uh_ref ref) {
  return guarded([&] {
    require(name, "name");
    tx_of(tx).set_root(name, uniheap::ObjectRef{ref});
    return UH_OK;
  });
}

uh_status uh_read_field(uh_session* session, uh_ref ref, uint32_t field, uh_value* out) {
  return guarded([&] {
    require(out, "out");
    *out = from_value(session_of(session).read_field(uniheap::ObjectRef{ref}, field));
    return UH_OK;
  });
}

uh_status uh_write_field_atomic(uh_session* session, uh_ref ref, uint32_t field, uh_value value) {
  return guarded([&] {
    session_of(session).write_field_atomic(uniheap::ObjectRef{ref}, field, to_value(value));
    return UH_OK;
  });
}

uh_status uh_set_root(uh_session* session, const char* name, uh_ref ref) {
  return guarded([&] {
    require(name, "name");
    session_of(session).set_root(name, uniheap::ObjectRef{ref});
    return UH_OK;
  });
}

uh_status uh_get_root(uh_session* session, const char* name, uh_ref* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    const auto r = session_of(session).get_root(name);
    if (!r) return fail_with(UH_NOT_FOUND, std::string("no root named '") + name + "'");
    *out = r->id;
    return UH_OK;
  });
}

uh_status uh_root_count(uh_session* session, size_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = session_of(session).list_roots().size();
    return UH_OK;
  });
}

uh_status uh_root_at(uh_session* session, size_t index, char* name_buf, size_t buf_len, uh_ref* out) {
  return guarded([&] {
    const auto roots = session_of(session).list_roots();
    if (index >= roots.size())
      uniheap::fail(ErrorCode::kIndexOutOfRange, "root index " + std::to_string(index));
    const auto& r = roots[index];
    if (name_buf) {
      if (buf_len <= r.name.size()) uniheap::fail(ErrorCode::kInvalidArgument, "name buffer too small");
      std::memcpy(name_buf, r.name.c_str(), r.name.size() + 1);
    }
    if (out) *out = r.ref.id;
    return UH_OK;
  });
}

uh_status uh_init_plass(uh_session* session, const char* name, const uh_field_desc* fields, size_t count,
                        uint32_t* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    if (count > 0) require(fields, "fields");
    std::vector<uniheap::FieldDesc> descs;
    descs.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      require(fields[i].name, "field name");
      descs.push_back({fields[i].name, to_type(fields[i].type)});
    }
    *out = session_of(session).init_plass(name, descs);
    return UH_OK;
  });
}

uh_status uh_exists_plass(uh_session* session, const char* name, uint32_t* out) {
  return guarded([&] {
    require(name, "name");
    const auto id = session_of(session).exists_plass(name);
    if (!id) return fail_with(UH_NOT_FOUND, std::string("no plass named '") + name + "'");
    if (out) *out = *id;
    return UH_OK;
  });
}

uh_status uh_array_plass(uh_session* session, uint32_t element_type, uint32_t* out) {
  return guarded([&] {
    require(out, "out");
    const auto type = to_type(element_type);
    const std::vector<uniheap::FieldDesc> element{{"element", type}};
    *out = session_of(session).init_plass(uniheap::array_plass_name(type), element);
    return UH_OK;
  });
}

uh_status uh_plass_count(uh_session* session, uint32_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = static_cast<uint32_t>(session_of(session).heap().plasses().count());
    return UH_OK;
  });
}

uh_status uh_plass_name(uh_session* session, uint32_t plass, const char** out) {
  return guarded([&] {
    require(out, "out");
    *out = plass_of_id(session_of(session), plass).name.c_str();
    return UH_OK;
  });
}

uh_status uh_plass_is_array(uh_session* session, uint32_t plass, int* out) {
  return guarded([&] {
    require(out, "out");
    *out = plass_of_id(session_of(session), plass).is_array() ? 1 : 0;
    return UH_OK;
  });
}

uh_status uh_plass_field_count(uh_session* session, uint32_t plass, uint32_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = static_cast<uint32_t>(plass_of_id(session_of(session), plass).field_count());
    return UH_OK;
  });
}

uh_status uh_plass_field(uh_session* session, uint32_t plass, uint32_t index, const char** name, uint32_t* type) {
  return guarded([&] {
    const auto& p = plass_of_id(session_of(session), plass);
    if (index >= p.fields.size()) uniheap::fail(ErrorCode::kIndexOutOfRange, "field " + std::to_string(index));
    if (name) *name = p.fields[index].name.c_str();
    if (type) *type = static_cast<uint32_t>(p.fields[index].type);
    return UH_OK;
  });
}

uh_status uh_field_index(uh_session* session, uint32_t plass, const char* field_name, uint32_t* out) {
  return guarded([&] {
    require(field_name, "field name");
    require(out, "out");
    *out = plass_of_id(session_of(session), plass).field_index(field_name);
    return UH_OK;
  });
}

uh_status uh_plass_of(uh_session* session, uh_ref ref, uint32_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = session_of(session).plass_of(uniheap::ObjectRef{ref}).id;
    return UH_OK;
  });
}

uh_status uh_slot_count(uh_session* session, uh_ref ref, uint32_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = session_of(session).slot_count(uniheap::ObjectRef{ref});
    return UH_OK;
  });
}

uh_status uh_request_gc(uh_session* session, uh_gc_report* out) {
  return guarded([&] {
    const auto r = session_of(session).request_gc();
    if (out) {
      out->live = r.live;
      out->reclaimed = r.reclaimed;
      out->log_bytes_before = r.log_bytes_before;
      out->log_bytes_after = r.log_bytes_after;
      out->active_epoch = r.epoch;
    }
    return UH_OK;
  });
}

uh_status uh_register_runtime(uh_session* session, uh_vroot_fn vroots, uh_relocate_fn relocate, void* ctx,
                              uint64_t* out_id) {
  return guarded([&] {
    require(out_id, "out_id");
    uniheap::Collector::VrootProvider provider;
    if (vroots) {
      provider = [vroots, ctx] {
        std::vector<uh_ref> buf(64);
        for (;;) {
          const size_t n = vroots(ctx, buf.data(), buf.size());
          if (n <= buf.size()) {
            std::vector<uniheap::ObjectRef> refs;
            refs.reserve(n);
            for (size_t i = 0; i < n; ++i) refs.push_back(uniheap::ObjectRef{buf[i]});
            return refs;
          }
          buf.resize(n);
        }
      };
    } else {
      provider = [] { return std::vector<uniheap::ObjectRef>{}; };
    }
    uniheap::Collector::RelocateCallback cb;
    if (relocate) {
      cb = [relocate, ctx](std::span<const std::uint64_t> fwd) { relocate(ctx, fwd.data(), fwd.size()); };
    }
    *out_id = session_of(session).register_runtime(std::move(provider), std::move(cb));
    return UH_OK;
  });
}

uh_status uh_unregister_runtime(uh_session* session, uint64_t id) {
  return guarded([&] {
    session_of(session).unregister_runtime(id);
    return UH_OK;
  });
}

uh_status uh_heap_stats(uh_session* session, uh_stats* out) {
  return guarded([&] {
    require(out, "out");
    const auto s = session_of(session).heap_stats();
    out->object_count = s.object_count;
    out->live_count = s.live_count;
    out->plass_count = s.plass_count;
    out->log_bytes_used = s.log_bytes_used;
    out->fence_count = s.fence_count;
    out->active_epoch = s.active_epoch;
    return UH_OK;
  });
}

uh_status uh_fence_count(uh_session* session, uint64_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = session_of(session).fence_count();
    return UH_OK;
  });
}

uh_status uh_map_foreign_type(const char* language, const char* foreign_type, uint32_t declared, uint32_t* out) {
  return guarded([&] {
    require(language, "language");
    require(foreign_type, "foreign type");
    require(out, "out");
    const auto lang = uniheap::parse_language(language);
    if (!lang) uniheap::fail(ErrorCode::kInvalidArgument, std::string("unknown language '") + language + "'");
    std::optional<uniheap::UniType> decl;
    if (declared != 0) decl = to_type(declared);
    *out = static_cast<uint32_t>(uniheap::map_foreign_type(*lang, foreign_type, decl));
    return UH_OK;
  });
}

const char* uh_type_name(uint32_t type) {
  if (type > 0xff || !uniheap::is_valid_type_tag(static_cast<std::uint8_t>(type))) return "unknown";
  return uniheap::unitype_name(static_cast<uniheap::UniType>(type)).data();
}

uh_status uh_info_json(uh_session* session, char** out) {
  return guarded([&] {
    require(out, "out");
    *out = dup_string(uniheap::info_json(session_of(session)).dump(2));
    return UH_OK;
  });
}

uh_status uh_verify_json(uh_session* session, char** out, int* clean) {
  return guarded([&] {
    require(out, "out");
    const auto report = uniheap::verify_image(session_of(session).device().persisted_view());
    *out = dup_string(uniheap::to_json(report).dump(2));
    if (clean) *clean = report.clean() ? 1 : 0;
    return report.not_a_heap ? fail_with(UH_NOT_A_HEAP, "image carries no heap magic") : UH_OK;
  });
}

uh_status uh_verify_file_json(const char* path, char** out, int* clean) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::ifstream in(path, std::ios::binary);
    if (!in) uniheap::fail(ErrorCode::kIoError, std::string("cannot open '") + path + "'");
    const std::vector<std::uint8_t> image((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) uniheap::fail(ErrorCode::kIoError, std::string("cannot read '") + path + "'");
    const auto report = uniheap::verify_image(image);
    *out = dup_string(uniheap::to_json(report).dump(2));
    if (clean) *clean = report.clean() ? 1 : 0;
    return report.not_a_heap ? fail_with(UH_NOT_A_HEAP, std::string("'") + path + "' is not a heap") : UH_OK;
  });
}

void uh_free_string(char* s) { std::free(s); }

}  // extern "C"
