#!/usr/bin/env python3
"""
View the training lab activity log
"""
import os
import sys
import time
import argparse
from pathlib import Path

LOG_FILE = Path(os.getenv("SEQ2SEQ_LAB_LOG", str(Path(__file__).parent / "logs" / "lab_activity.log")))


def read_lines(log_file=None):
    log_file = Path(log_file or LOG_FILE)
    if not log_file.exists():
        return None
    with open(log_file, 'r') as f:
        return f.readlines()


def parse_entry(line):
    """(event type, run id or None) of one entry"""
    event_type, run_id = None, None
    start = line.find('[', line.find(']') + 1) + 1
    end = line.find(']', start)
    if start > 0 and end > start:
        event_type = line[start:end]
    if '[ID:' in line:
        id_start = line.find('[ID:') + 4
        id_end = line.find(']', id_start)
        if id_end > id_start:
            run_id = line[id_start:id_end].strip()
    return event_type, run_id


def view_log(lines=50, follow=False, log_file=None):
    """Show the last entries, or follow the file like tail -f"""
    log_file = Path(log_file or LOG_FILE)
    if not log_file.exists():
        print("No activity log found. No run has started yet.")
        return

    if follow:
        last_size = 0
        print(f"Following {log_file} (Ctrl+C to stop)...\n")
        try:
            while True:
                current_size = log_file.stat().st_size
                if current_size < last_size:
                    # the capped log was rewritten
                    last_size = 0
                if current_size != last_size:
                    with open(log_file, 'r') as f:
                        f.seek(last_size)
                        new_content = f.read()
                        if new_content:
                            print(new_content, end='')
                    last_size = current_size
                time.sleep(0.5)
        except KeyboardInterrupt:
            print("\nStopped following log.")
        return

    all_lines = read_lines(log_file)
    if not all_lines:
        print("Activity log is empty.")
        return
    display_lines = all_lines[-lines:]
    print(f"=== Training Lab Activity Log (last {len(display_lines)} entries) ===\n")
    for line in display_lines:
        print(line.rstrip())
    print(f"\nTotal entries: {len(all_lines)}")
    print(f"Log file: {log_file}")


def search_log(pattern, log_file=None):
    """Case-insensitive substring search"""
    lines = read_lines(log_file)
    if lines is None:
        print("No activity log found.")
        return []

    matches = [(i, line.rstrip()) for i, line in enumerate(lines) if pattern.lower() in line.lower()]
    if matches:
        print(f"Found {len(matches)} matches for '{pattern}':\n")
        for i, line in matches:
            print(f"{i+1}: {line}")
    else:
        print(f"No matches found for '{pattern}'")
    return matches


def log_stats(log_file=None):
    """Event counts and distinct runs"""
    lines = read_lines(log_file) or []
    event_counts = {}
    run_ids = set()
    for line in lines:
        event_type, run_id = parse_entry(line)
        if event_type:
            event_counts[event_type] = event_counts.get(event_type, 0) + 1
        if run_id:
            run_ids.add(run_id)
    return {'entries': len(lines), 'runs': len(run_ids), 'events': event_counts}


def print_stats(log_file=None):
    if read_lines(log_file) is None:
        print("No activity log found.")
        return
    stats = log_stats(log_file)
    print("=== Training Lab Activity Statistics ===\n")
    print(f"Total log entries: {stats['entries']}")
    print(f"Distinct runs: {stats['runs']}")
    print("\nEvent counts:")
    for event, count in sorted(stats['events'].items(), key=lambda x: x[1], reverse=True):
        print(f"  {event}: {count}")


def main(argv=None):
    parser = argparse.ArgumentParser(description="View training lab activity log")
    parser.add_argument('-n', '--lines', type=int, default=50,
                        help='Number of lines to show (default: 50)')
    parser.add_argument('-f', '--follow', action='store_true',
                        help='Follow the log in real-time (like tail -f)')
    parser.add_argument('-s', '--search', type=str,
                        help='Search for a pattern in the log')
    parser.add_argument('--stats', action='store_true',
                        help='Show statistics about the log')
    parser.add_argument('--file', type=str, help='Log file (default: $SEQ2SEQ_LAB_LOG or logs/)')

    args = parser.parse_args(argv)

    if args.search:
        search_log(args.search, args.file)
    elif args.stats:
        print_stats(args.file)
    else:
        view_log(args.lines, args.follow, args.file)


if __name__ == "__main__":
    main(sys.argv[1:])
